#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ghn/tensor.hpp"

namespace ghn {

enum class DataErrorKind { io, wrong_magic, truncated, count_mismatch, bad_label, bad_shape };

const char* to_string(DataErrorKind k);

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

/// Images [n, h, w, c] with values in [0, 1] and integer labels.
struct Dataset {
  std::string name;
  Tensor<float> images;
  std::vector<int> labels;
  int num_classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t height() const { return images.dim(1); }
  std::size_t width() const { return images.dim(2); }
  std::size_t channels() const { return images.dim(3); }
  std::size_t image_size() const { return height() * width() * channels(); }
};

/// Validates the invariants (shape, [0,1] pixels, label range).
Dataset make_dataset(std::string name, Tensor<float> images, std::vector<int> labels,
                     int num_classes);

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
inline constexpr std::size_t kCifarRecordBytes = 3073;

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

/// Standard file names under `dir`; split is "train" or "t10k".
Dataset load_mnist_dir(const std::filesystem::path& dir, const std::string& split);

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_files);

/// data_batch_1..5.bin (train) or test_batch.bin (test), searched in `dir`
/// and `dir/cifar-10-batches-bin`.
Dataset load_cifar10_dir(const std::filesystem::path& dir, bool train);

/// First `count` examples (or all when count >= size).
Dataset head(const Dataset& ds, std::size_t count);
Dataset select(const Dataset& ds, const std::vector<std::size_t>& indices);

struct Batch {
  Tensor<float> images;  // [b, h, w, c]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source dataset
};

/// Deterministic mini-batch stream. Each epoch visits every example exactly
/// once; with shuffling the order is a permutation seeded by (seed, epoch).
/// The final batch of an epoch may be short.
class BatchIterator {
 public:
  BatchIterator(const Dataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed);

  Batch next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const;

  /// Batches remaining in the current epoch, in order, without advancing.
  std::vector<Batch> epoch_batches();

 private:
  void reshuffle();

  const Dataset* ds_;
  std::size_t batch_size_;
  bool shuffle_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// Permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// One epoch of batches for a dataset.
std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size, bool shuffle,
                              std::uint64_t seed);

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices);

/// FNV-1a over a batch's source indices and labels; used to prove two runs
/// consumed identical streams.
std::uint64_t batch_checksum(const Batch& b, std::uint64_t prior = 0xcbf29ce484222325ULL);

}  // namespace ghn
