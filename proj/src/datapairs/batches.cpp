#include "biov/datapairs/batches.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "biov/core/errors.hpp"
#include "biov/core/parallel.hpp"
#include "biov/core/rng.hpp"
#include "biov/datapairs/augment.hpp"

namespace biov {

ImageCache::ImageCache(std::filesystem::path root, const std::vector<const PairSet*>& sets) : root_(std::move(root)) {
  std::set<std::string> paths;
  for (const auto* s : sets) {
    for (const auto& p : s->pairs) {
      paths.insert(p.a.path);
      paths.insert(p.b.path);
    }
  }
  const std::vector<std::string> ordered(paths.begin(), paths.end());
  std::vector<GrayImage> loaded(ordered.size());
  parallel_for(ordered.size(), [&](std::size_t i) { loaded[i] = read_pgm(root_ / ordered[i]); });
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    if (i == 0) {
      height_ = loaded[i].height;
      width_ = loaded[i].width;
    } else if (loaded[i].height != height_ || loaded[i].width != width_) {
      throw ShapeError((root_ / ordered[i]).string(), {height_, width_}, {loaded[i].height, loaded[i].width},
                       "images in one experiment must share a size");
    }
    images_.emplace(ordered[i], std::move(loaded[i]));
  }
}

const GrayImage& ImageCache::get(const std::string& path) const {
  auto it = images_.find(path);
  if (it == images_.end()) throw KeyError(path, "image not in cache");
  return it->second;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n_pairs, std::size_t batch_size,
                                                    std::uint64_t epoch_seed) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  std::vector<std::size_t> order(n_pairs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(epoch_seed, {0xBA7Cu}));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n_pairs; start += batch_size) {
    const std::size_t end = std::min(n_pairs, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch load_batch(const PairSet& pairs, const ImageCache& cache, const std::vector<std::size_t>& indices,
                 std::uint64_t epoch_seed, bool augmented) {
  if (indices.empty()) throw InvalidArgument("load_batch: empty index list");
  const std::size_t n = indices.size(), h = cache.height(), w = cache.width();
  const std::size_t plane = h * w;
  Batch batch{Tensor<float>({n, 1, h, w}), Tensor<float>({n, 1, h, w}), std::vector<int>(n), indices};
  parallel_for(n, [&](std::size_t k) {
    const std::size_t idx = indices[k];
    if (idx >= pairs.pairs.size()) throw InvalidArgument("load_batch: pair index out of range");
    const auto& pair = pairs.pairs[idx];
    for (int side = 0; side < 2; ++side) {
      const GrayImage& img = cache.get(side == 0 ? pair.a.path : pair.b.path);
      const Tensor<float> t = augmented ? augment(img, derive_seed(epoch_seed, {idx, static_cast<std::uint64_t>(side)}))
                                        : standardize(img);
      float* dst = (side == 0 ? batch.a : batch.b).data() + k * plane;
      std::copy(t.data(), t.data() + plane, dst);
    }
    batch.labels[k] = pair.label;
  });
  return batch;
}

BatchSequence::BatchSequence(const PairSet& pairs, const ImageCache& cache, std::size_t batch_size,
                             std::uint64_t epoch_seed, bool augmented)
    : pairs_(pairs),
      cache_(cache),
      epoch_seed_(epoch_seed),
      augmented_(augmented),
      order_(batch_indices(pairs.pairs.size(), batch_size, epoch_seed)) {}

Batch BatchSequence::operator[](std::size_t k) const {
  if (k >= order_.size()) throw InvalidArgument("batch index out of range");
  return load_batch(pairs_, cache_, order_[k], epoch_seed_, augmented_);
}

}  // namespace biov
