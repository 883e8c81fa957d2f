#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "biov/core/pgm.hpp"
#include "biov/datapairs/pairs.hpp"
#include "biov/numkernel/tensor.hpp"

namespace biov {

/// Decoded images keyed by record path. Images are loaded up front so the
/// cache is read-only (and thread-safe) afterwards. All images must share one
/// size.
class ImageCache {
 public:
  ImageCache(std::filesystem::path root, const std::vector<const PairSet*>& sets);

  const GrayImage& get(const std::string& path) const;
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return images_.size(); }

 private:
  std::filesystem::path root_;
  std::unordered_map<std::string, GrayImage> images_;
  std::size_t height_ = 0, width_ = 0;
};

struct Batch {
  Tensor<float> a;                  // [N, 1, H, W]
  Tensor<float> b;                  // [N, 1, H, W]
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the PairSet
};

/// Shuffled pair indices cut into batches of batch_size; the last batch may be
/// short. Pure function of (n_pairs, batch_size, epoch_seed).
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n_pairs, std::size_t batch_size,
                                                    std::uint64_t epoch_seed);

/// Image tensors for the given pairs. With augmentation each image uses the
/// seed derive_seed(epoch_seed, {pair index, side}), so results do not depend
/// on batch layout or worker count; without it images are only standardized.
Batch load_batch(const PairSet& pairs, const ImageCache& cache, const std::vector<std::size_t>& indices,
                 std::uint64_t epoch_seed, bool augmented);

class BatchSequence {
 public:
  BatchSequence(const PairSet& pairs, const ImageCache& cache, std::size_t batch_size, std::uint64_t epoch_seed,
                bool augmented = true);

  std::size_t size() const noexcept { return order_.size(); }
  Batch operator[](std::size_t k) const;
  const std::vector<std::vector<std::size_t>>& order() const noexcept { return order_; }

 private:
  const PairSet& pairs_;
  const ImageCache& cache_;
  std::uint64_t epoch_seed_;
  bool augmented_;
  std::vector<std::vector<std::size_t>> order_;
};

inline BatchSequence batches(const PairSet& pairs, const ImageCache& cache, std::size_t batch_size,
                             std::uint64_t epoch_seed, bool augmented = true) {
  return BatchSequence(pairs, cache, batch_size, epoch_seed, augmented);
}

}  // namespace biov
