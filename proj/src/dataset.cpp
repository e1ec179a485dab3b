#include "hcnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace hcnet {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  in.seekg(0, std::ios::end);
  std::streamsize size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> data(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(data.data()), size);
  if (!in) throw IoError("failed reading '" + path + "'");
  return data;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& data, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > data.size())
    throw ParseError("'" + path + "' truncated: need 4 bytes at offset " + std::to_string(offset) +
                     ", file has " + std::to_string(data.size()));
  return (std::uint32_t(data[offset]) << 24) | (std::uint32_t(data[offset + 1]) << 16) |
         (std::uint32_t(data[offset + 2]) << 8) | std::uint32_t(data[offset + 3]);
}

void normalize(Dataset& ds, const ChannelStats* given) {
  std::size_t plane = ds.height * ds.width;
  if (given) {
    ds.stats = *given;
  } else {
    ds.stats.mean.assign(ds.channels, 0.0);
    ds.stats.stddev.assign(ds.channels, 0.0);
    for (std::size_t c = 0; c < ds.channels; ++c) {
      double sum = 0.0, sq = 0.0;
      std::size_t n = ds.count * plane;
      for (std::size_t i = 0; i < ds.count; ++i) {
        const float* img = ds.images.data() + i * ds.sample_size() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          sum += img[p];
          sq += double(img[p]) * img[p];
        }
      }
      double mean = sum / n;
      double var = sq / n - mean * mean;
      ds.stats.mean[c] = mean;
      ds.stats.stddev[c] = var > 0 ? std::sqrt(var) : 1.0;
    }
  }
  for (std::size_t i = 0; i < ds.count; ++i)
    for (std::size_t c = 0; c < ds.channels; ++c) {
      float* img = ds.images.data() + i * ds.sample_size() + c * plane;
      float m = static_cast<float>(ds.stats.mean[c]);
      float inv = static_cast<float>(1.0 / ds.stats.stddev[c]);
      for (std::size_t p = 0; p < plane; ++p) img[p] = (img[p] - m) * inv;
    }
}

void check_labels(Dataset& ds, const std::string& path, std::size_t header_bytes) {
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] >= ds.num_classes)
      throw ParseError("'" + path + "' label " + std::to_string(int(ds.labels[i])) +
                       " out of range [0," + std::to_string(ds.num_classes) + ") at byte offset " +
                       std::to_string(header_bytes + i));
}

}  // namespace

std::vector<std::uint8_t> read_idx_images(const std::string& path, std::size_t& count,
                                          std::size_t& rows, std::size_t& cols) {
  auto data = read_file(path);
  std::uint32_t magic = read_be32(data, 0, path);
  if (magic != kIdxImagesMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw ParseError("'" + path + "' bad magic " + buf + " at byte offset 0 (want 0x00000803)");
  }
  count = read_be32(data, 4, path);
  rows = read_be32(data, 8, path);
  cols = read_be32(data, 12, path);
  std::size_t need = 16 + count * rows * cols;
  if (data.size() < need)
    throw ParseError("'" + path + "' truncated at byte offset " + std::to_string(data.size()) +
                     ": header promises " + std::to_string(need) + " bytes");
  return {data.begin() + 16, data.begin() + static_cast<long>(need)};
}

std::vector<std::uint8_t> read_idx_labels(const std::string& path, std::size_t& count) {
  auto data = read_file(path);
  std::uint32_t magic = read_be32(data, 0, path);
  if (magic != kIdxLabelsMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw ParseError("'" + path + "' bad magic " + buf + " at byte offset 0 (want 0x00000801)");
  }
  count = read_be32(data, 4, path);
  std::size_t need = 8 + count;
  if (data.size() < need)
    throw ParseError("'" + path + "' truncated at byte offset " + std::to_string(data.size()) +
                     ": header promises " + std::to_string(need) + " bytes");
  return {data.begin() + 8, data.begin() + static_cast<long>(need)};
}

Dataset load_mnist(const std::string& dir, Split split, const ChannelStats* stats) {
  std::string prefix = split == Split::train ? "train" : "t10k";
  std::string images_path = dir + "/" + prefix + "-images-idx3-ubyte";
  std::string labels_path = dir + "/" + prefix + "-labels-idx1-ubyte";

  std::size_t count = 0, rows = 0, cols = 0, label_count = 0;
  auto pixels = read_idx_images(images_path, count, rows, cols);
  auto labels = read_idx_labels(labels_path, label_count);
  if (count != label_count)
    throw ParseError("MNIST image/label counts disagree: " + std::to_string(count) + " vs " +
                     std::to_string(label_count));

  Dataset ds;
  ds.count = count;
  ds.channels = 1;
  ds.height = rows;
  ds.width = cols;
  ds.num_classes = 10;
  ds.images.resize(count * rows * cols);
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images[i] = pixels[i] / 255.0f;
  ds.labels = std::move(labels);
  check_labels(ds, labels_path, 8);
  normalize(ds, stats);
  return ds;
}

Dataset load_cifar10(const std::string& dir, Split split, const ChannelStats* stats) {
  constexpr std::size_t kRecord = 3073;  // 1 label byte + 3*32*32 pixels
  std::vector<std::string> files;
  if (split == Split::train) {
    for (int b = 1; b <= 5; ++b) files.push_back(dir + "/data_batch_" + std::to_string(b) + ".bin");
  } else {
    files.push_back(dir + "/test_batch.bin");
  }

  Dataset ds;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.num_classes = 10;
  for (const auto& path : files) {
    auto data = read_file(path);
    if (data.empty() || data.size() % kRecord != 0)
      throw ParseError("'" + path + "' truncated at byte offset " + std::to_string(data.size()) +
                       ": size must be a positive multiple of " + std::to_string(kRecord));
    std::size_t records = data.size() / kRecord;
    for (std::size_t r = 0; r < records; ++r) {
      const std::uint8_t* rec = data.data() + r * kRecord;
      if (rec[0] >= 10)
        throw ParseError("'" + path + "' label " + std::to_string(int(rec[0])) +
                         " out of range [0,10) at byte offset " + std::to_string(r * kRecord));
      ds.labels.push_back(rec[0]);
      for (std::size_t p = 0; p < 3072; ++p) ds.images.push_back(rec[1 + p] / 255.0f);
    }
    ds.count += records;
  }
  normalize(ds, stats);
  return ds;
}

}  // namespace hcnet
