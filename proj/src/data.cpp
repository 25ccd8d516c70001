#include "ghn/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>

namespace ghn {

const char* to_string(DataErrorKind k) {
  switch (k) {
    case DataErrorKind::io: return "io";
    case DataErrorKind::wrong_magic: return "wrong_magic";
    case DataErrorKind::truncated: return "truncated";
    case DataErrorKind::count_mismatch: return "count_mismatch";
    case DataErrorKind::bad_label: return "bad_label";
    case DataErrorKind::bad_shape: return "bad_shape";
  }
  return "?";
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw DataError(DataErrorKind::truncated, path.string() + ": truncated header");
  }
  return (std::uint32_t(buf[offset]) << 24) | (std::uint32_t(buf[offset + 1]) << 16) |
         (std::uint32_t(buf[offset + 2]) << 8) | std::uint32_t(buf[offset + 3]);
}

}  // namespace

Dataset make_dataset(std::string name, Tensor<float> images, std::vector<int> labels,
                     int num_classes) {
  if (images.rank() != 4) {
    throw DataError(DataErrorKind::bad_shape, "images must be [n,h,w,c], got " +
                                                  shape_str(images.shape()));
  }
  if (images.dim(0) != labels.size()) {
    throw DataError(DataErrorKind::count_mismatch,
                    std::to_string(images.dim(0)) + " images but " +
                        std::to_string(labels.size()) + " labels");
  }
  for (float v : images.vec()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DataError(DataErrorKind::bad_shape, "pixel value outside [0,1]");
    }
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw DataError(DataErrorKind::bad_label, "label " + std::to_string(y) + " outside [0," +
                                                    std::to_string(num_classes) + ")");
    }
  }
  return Dataset{std::move(name), std::move(images), std::move(labels), num_classes};
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImagesMagic) {
    throw DataError(DataErrorKind::wrong_magic, images_path.string() + ": magic " +
                                                    std::to_string(img_magic) +
                                                    " is not an IDX image file (2051)");
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelsMagic) {
    throw DataError(DataErrorKind::wrong_magic, labels_path.string() + ": magic " +
                                                    std::to_string(lab_magic) +
                                                    " is not an IDX label file (2049)");
  }
  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);
  if (img.size() < 16 + count * rows * cols) {
    throw DataError(DataErrorKind::truncated,
                    images_path.string() + ": expected " + std::to_string(count) + " images of " +
                        std::to_string(rows) + "x" + std::to_string(cols) + ", file too short");
  }
  if (lab.size() < 8 + label_count) {
    throw DataError(DataErrorKind::truncated, labels_path.string() + ": expected " +
                                                  std::to_string(label_count) +
                                                  " labels, file too short");
  }
  if (count != label_count) {
    throw DataError(DataErrorKind::count_mismatch, std::to_string(count) + " images but " +
                                                       std::to_string(label_count) + " labels");
  }
  Tensor<float> images(Shape{count, rows, cols, 1});
  for (std::size_t i = 0; i < count * rows * cols; ++i) {
    images[i] = static_cast<float>(img[16 + i]) / 255.0f;
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    labels[i] = lab[8 + i];
    if (labels[i] > 9) {
      throw DataError(DataErrorKind::bad_label, labels_path.string() + ": label " +
                                                    std::to_string(labels[i]) + " at index " +
                                                    std::to_string(i));
    }
  }
  return Dataset{"mnist", std::move(images), std::move(labels), 10};
}

Dataset load_mnist_dir(const std::filesystem::path& dir, const std::string& split) {
  auto ds = load_mnist_idx(dir / (split + "-images-idx3-ubyte"), dir / (split + "-labels-idx1-ubyte"));
  ds.name = "mnist-" + split;
  return ds;
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_files) {
  if (batch_files.empty()) throw DataError(DataErrorKind::io, "no CIFAR-10 batch files given");
  std::vector<std::vector<unsigned char>> blobs;
  std::size_t records = 0;
  for (const auto& path : batch_files) {
    blobs.push_back(read_file(path));
    const auto& b = blobs.back();
    if (b.empty() || b.size() % kCifarRecordBytes != 0) {
      throw DataError(DataErrorKind::truncated,
                      path.string() + ": length " + std::to_string(b.size()) +
                          " is not a multiple of the 3073-byte record size");
    }
    records += b.size() / kCifarRecordBytes;
  }
  constexpr std::size_t plane = 32 * 32;
  Tensor<float> images(Shape{records, 32, 32, 3});
  std::vector<int> labels(records);
  std::size_t r = 0;
  for (std::size_t fi = 0; fi < blobs.size(); ++fi) {
    const auto& b = blobs[fi];
    for (std::size_t off = 0; off < b.size(); off += kCifarRecordBytes, ++r) {
      const int label = b[off];
      if (label > 9) {
        throw DataError(DataErrorKind::bad_label,
                        batch_files[fi].string() + ": label byte " + std::to_string(label) +
                            " in record " + std::to_string(off / kCifarRecordBytes));
      }
      labels[r] = label;
      float* dst = &images[r * plane * 3];
      for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
          dst[p * 3 + c] = static_cast<float>(b[off + 1 + c * plane + p]) / 255.0f;
        }
      }
    }
  }
  return Dataset{"cifar10", std::move(images), std::move(labels), 10};
}

Dataset load_cifar10_dir(const std::filesystem::path& dir, bool train) {
  std::filesystem::path base = dir;
  if (!std::filesystem::exists(base / "test_batch.bin") &&
      std::filesystem::exists(dir / "cifar-10-batches-bin")) {
    base = dir / "cifar-10-batches-bin";
  }
  std::vector<std::filesystem::path> files;
  if (train) {
    for (int i = 1; i <= 5; ++i) files.push_back(base / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(base / "test_batch.bin");
  }
  auto ds = load_cifar10(files);
  ds.name = train ? "cifar10-train" : "cifar10-test";
  return ds;
}

Dataset head(const Dataset& ds, std::size_t count) {
  std::vector<std::size_t> idx(std::min(count, ds.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return select(ds, idx);
}

Dataset select(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Batch b = gather(ds, indices);
  return Dataset{ds.name, std::move(b.images), std::move(b.labels), ds.num_classes};
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices) {
  const std::size_t per = ds.image_size();
  Tensor<float> images(Shape{indices.size(), ds.height(), ds.width(), ds.channels()});
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= ds.size()) throw DataError(DataErrorKind::bad_shape, "example index out of range");
    std::copy_n(&ds.images[src * per], per, &images[i * per]);
    labels[i] = ds.labels[src];
  }
  return Batch{std::move(images), std::move(labels), indices};
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Mix the epoch index into the seed (splitmix64 finalizer) so every epoch
  // gets an independent shuffle.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  std::mt19937_64 rng(z);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, bool shuffle,
                             std::uint64_t seed)
    : ds_(&ds), batch_size_(batch_size), shuffle_(shuffle), seed_(seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (ds.size() == 0) throw std::invalid_argument("cannot iterate an empty dataset");
  reshuffle();
}

void BatchIterator::reshuffle() {
  if (shuffle_) {
    order_ = epoch_permutation(ds_->size(), seed_, epoch_);
  } else {
    order_.resize(ds_->size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }
  cursor_ = 0;
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (ds_->size() + batch_size_ - 1) / batch_size_;
}

Batch BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(cursor_ + batch_size_, order_.size());
  std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return gather(*ds_, idx);
}

std::vector<Batch> BatchIterator::epoch_batches() {
  std::vector<Batch> out;
  while (cursor_ < order_.size()) out.push_back(next());
  return out;
}

std::vector<Batch> batch_iter(const Dataset& ds, std::size_t batch_size, bool shuffle,
                              std::uint64_t seed) {
  BatchIterator it(ds, batch_size, shuffle, seed);
  return it.epoch_batches();
}

std::uint64_t batch_checksum(const Batch& b, std::uint64_t prior) {
  std::uint64_t h = prior;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    mix(b.indices.empty() ? i : b.indices[i]);
    mix(static_cast<std::uint64_t>(b.labels[i]));
  }
  return h;
}

}  // namespace ghn
