#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcnet/errors.hpp"

namespace hcnet {

// Normalization statistics, always computed from a training split and
// reused for the matching test split.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

// In-memory labelled image set, normalized per channel to zero mean and
// unit variance.
struct Dataset {
  std::size_t count = 0;
  std::size_t channels = 0, height = 0, width = 0;
  int num_classes = 0;
  std::vector<float> images;  // [count, channels, height, width]
  std::vector<std::uint8_t> labels;
  ChannelStats stats;

  std::size_t sample_size() const { return channels * height * width; }
  const float* image(std::size_t i) const { return images.data() + i * sample_size(); }
};

enum class Split { train, test };

// MNIST IDX pair (train-images-idx3-ubyte / train-labels-idx1-ubyte or the
// t10k equivalents) from `dir`. When `stats` is given the images are
// normalized with it instead of the split's own statistics.
Dataset load_mnist(const std::string& dir, Split split = Split::train,
                   const ChannelStats* stats = nullptr);

// CIFAR-10 binary batches (data_batch_1..5.bin / test_batch.bin).
Dataset load_cifar10(const std::string& dir, Split split = Split::train,
                     const ChannelStats* stats = nullptr);

// Raw parsers, exposed for fixtures and the loaders above.
std::vector<std::uint8_t> read_idx_images(const std::string& path, std::size_t& count,
                                          std::size_t& rows, std::size_t& cols);
std::vector<std::uint8_t> read_idx_labels(const std::string& path, std::size_t& count);

}  // namespace hcnet
