#pragma once

#include <array>
#include <cmath>
#include <span>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "forge/batch.hpp"
#include "forge/rng.hpp"
#include "forge/tensor.hpp"

namespace forge {

enum class DataErrorKind { Io, WrongMagic, Truncated, SizeOverflow, LabelOutOfRange, Pairing, BadArgument };

class DataError : public std::runtime_error {
 public:
  DataError(DataErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  DataErrorKind kind() const { return kind_; }

 private:
  DataErrorKind kind_;
};

struct Dataset {
  LabeledBatch train;
  LabeledBatch test;
  std::size_t n_classes = 0;
  std::size_t dim = 0;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace idx {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorKind::Io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

/// Image file bytes -> [m, rows*cols] with pixels scaled to [0, 1].
inline Tensor decode_images(const std::vector<std::uint8_t>& bytes, const std::string& source = "images") {
  if (bytes.size() < 4) throw DataError(DataErrorKind::Truncated, source + ": header needs 16 bytes");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic)
    throw DataError(DataErrorKind::WrongMagic, source + ": magic " + std::to_string(magic) +
                                                   " is not an IDX image file (2051)");
  if (bytes.size() < 16) throw DataError(DataErrorKind::Truncated, source + ": header needs 16 bytes");
  const std::uint64_t m = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
  const std::uint64_t pixels = rows * cols;  // < 2^64
  if (pixels != 0 && m > std::numeric_limits<std::uint64_t>::max() / pixels)
    throw DataError(DataErrorKind::SizeOverflow, source + ": m*rows*cols overflows");
  const std::uint64_t total = m * pixels;
  if (total > (std::uint64_t{1} << 34))
    throw DataError(DataErrorKind::SizeOverflow, source + ": image payload too large");
  if (bytes.size() - 16 < total)
    throw DataError(DataErrorKind::Truncated, source + ": header promises " + std::to_string(total) +
                                                  " pixel bytes, file has " +
                                                  std::to_string(bytes.size() - 16));
  Tensor out({static_cast<std::size_t>(m), static_cast<std::size_t>(pixels)});
  for (std::size_t i = 0; i < total; ++i) out.values[i] = bytes[16 + i] / 255.0;
  return out;
}

/// Label file bytes -> one-hot [m, n_classes].
inline Tensor decode_labels(const std::vector<std::uint8_t>& bytes, std::size_t n_classes,
                            const std::string& source = "labels") {
  if (bytes.size() < 4) throw DataError(DataErrorKind::Truncated, source + ": header needs 8 bytes");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kLabelMagic)
    throw DataError(DataErrorKind::WrongMagic, source + ": magic " + std::to_string(magic) +
                                                   " is not an IDX label file (2049)");
  if (bytes.size() < 8) throw DataError(DataErrorKind::Truncated, source + ": header needs 8 bytes");
  const std::uint64_t m = read_be32(bytes, 4);
  if (bytes.size() - 8 < m)
    throw DataError(DataErrorKind::Truncated, source + ": header promises " + std::to_string(m) +
                                                  " labels, file has " + std::to_string(bytes.size() - 8));
  if (n_classes < 1) throw DataError(DataErrorKind::BadArgument, "n_classes must be positive");
  Tensor out({static_cast<std::size_t>(m), n_classes});
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint8_t label = bytes[8 + i];
    if (label >= n_classes)
      throw DataError(DataErrorKind::LabelOutOfRange, source + ": label " + std::to_string(label) +
                                                          " at index " + std::to_string(i) +
                                                          " is not below " + std::to_string(n_classes));
    out.values[i * n_classes + label] = 1.0;
  }
  return out;
}

/// IDX image bytes. Pixels are scaled by 255 and rounded.
inline std::vector<std::uint8_t> encode_images(const Tensor& images, std::uint32_t rows, std::uint32_t cols) {
  if (images.rank() != 2 || images.cols() != std::size_t{rows} * cols)
    throw DataError(DataErrorKind::BadArgument, "image tensor does not have rows*cols columns");
  std::vector<std::uint8_t> out;
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.rows()));
  put_be32(out, rows);
  put_be32(out, cols);
  for (double v : images.values) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
  }
  return out;
}

inline std::vector<std::uint8_t> encode_labels(const Tensor& one_hot) {
  std::vector<std::uint8_t> out;
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(one_hot.rows()));
  for (std::size_t i = 0; i < one_hot.rows(); ++i) {
    auto row = one_hot.row(i);
    std::size_t hot = 0;
    while (hot < row.size() && row[hot] != 1.0) ++hot;
    if (hot == row.size() || hot > 255) throw DataError(DataErrorKind::BadArgument, "label row is not one-hot");
    out.push_back(static_cast<std::uint8_t>(hot));
  }
  return out;
}

}  // namespace idx

inline Tensor load_idx_images(const std::filesystem::path& path) {
  return idx::decode_images(idx::read_file(path), path.string());
}

inline Tensor load_idx_labels(const std::filesystem::path& path, std::size_t n_classes) {
  return idx::decode_labels(idx::read_file(path), n_classes, path.string());
}

/// Pairs an image tensor with its labels, checking the row counts agree.
inline LabeledBatch pair_batch(Tensor images, Tensor labels) {
  if (images.rows() != labels.rows())
    throw DataError(DataErrorKind::Pairing, "image file has " + std::to_string(images.rows()) +
                                                " rows but label file has " + std::to_string(labels.rows()));
  return {std::move(images), std::move(labels)};
}

/// Every fifth row (index % 5 == 4) goes to test, the rest to train.
inline Dataset split_round_robin(const LabeledBatch& all) {
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < all.size(); ++i) (i % 5 == 4 ? test_rows : train_rows).push_back(i);
  if (train_rows.empty() || test_rows.empty())
    throw DataError(DataErrorKind::BadArgument, "need at least 5 rows to split into train and test");
  return {all.gather(train_rows), all.gather(test_rows), all.classes(), all.dim()};
}

inline Dataset make_dataset(LabeledBatch train, LabeledBatch test) {
  if (train.dim() != test.dim() || train.classes() != test.classes())
    throw DataError(DataErrorKind::Pairing, "train and test splits disagree on dimension or classes");
  const std::size_t n = train.classes(), d = train.dim();
  return {std::move(train), std::move(test), n, d};
}

struct BlobOptions {
  std::size_t n_classes = 10;
  std::size_t dim = 64;
  std::size_t m_per_class = 100;
  std::uint64_t seed = 42;
  double spread = 0.15;
};

/// Class c is centred at 0.8 * e_c with isotropic Gaussian noise of scale
/// `spread`, clipped to [0, 1]. Rows are generated class-major (row k has
/// class k / m_per_class) with noise drawn row by row from
/// SplitMix64(seed) via Box-Muller, then split 80/20 by round robin.
inline Dataset synthetic_blobs(const BlobOptions& o) {
  if (o.n_classes < 2) throw DataError(DataErrorKind::BadArgument, "synthetic_blobs needs n_classes >= 2");
  if (o.dim < o.n_classes) throw DataError(DataErrorKind::BadArgument, "synthetic_blobs needs dim >= n_classes");
  if (o.m_per_class < 1) throw DataError(DataErrorKind::BadArgument, "synthetic_blobs needs m_per_class >= 1");
  if (!(o.spread >= 0.0)) throw DataError(DataErrorKind::BadArgument, "spread must be non-negative");

  const std::size_t total = o.n_classes * o.m_per_class;
  LabeledBatch all{Tensor({total, o.dim}), Tensor({total, o.n_classes})};
  SplitMix64 rng(o.seed);
  for (std::size_t k = 0; k < total; ++k) {
    const std::size_t c = k / o.m_per_class;
    auto x = all.images.row(k);
    for (std::size_t j = 0; j < o.dim; ++j) {
      const double centre = j == c ? 0.8 : 0.0;
      const double v = centre + o.spread * rng.normal();
      x[j] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    all.labels(k, c) = 1.0;
  }
  return split_round_robin(all);
}

/// Endless deterministic minibatches: a seeded shuffle per epoch, cut into
/// floor(m / batch_size) batches; the partial remainder is dropped. The
/// source batch must outlive the iterator.
class BatchIterator {
 public:
  BatchIterator(const LabeledBatch& source, std::size_t batch_size, std::uint64_t seed)
      : source_(&source), batch_size_(batch_size), rng_(seed) {
    if (batch_size < 1 || batch_size > source.size())
      throw DataError(DataErrorKind::BadArgument, "batch size " + std::to_string(batch_size) +
                                                      " must be between 1 and the " +
                                                      std::to_string(source.size()) + " available rows");
    order_.resize(source.size());
    reshuffle();
  }

  LabeledBatch next() {
    if (cursor_ + batch_size_ > order_.size()) reshuffle();
    std::span<const std::size_t> rows(order_.data() + cursor_, batch_size_);
    cursor_ += batch_size_;
    return source_->gather(rows);
  }

  std::size_t batches_per_epoch() const { return order_.size() / batch_size_; }
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order_), rng_);
    cursor_ = 0;
    ++epoch_;
  }

  const LabeledBatch* source_;
  std::size_t batch_size_;
  SplitMix64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace forge
