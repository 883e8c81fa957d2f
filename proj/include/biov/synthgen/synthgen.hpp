#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "biov/core/pgm.hpp"
#include "biov/datapairs/records.hpp"

namespace biov {

inline constexpr std::size_t kLatentDim = 32;

using Latent = std::vector<double>;

/// Core latent plus one latent per trait. Each trait latent is
/// sqrt(rho)*core + sqrt(1-rho)*noise rescaled to unit RMS; at rho == 1 it is
/// the core itself.
struct SubjectLatent {
  std::string subject_id;
  Latent core;
  Latent left_iris;
  Latent right_iris;
  std::array<Latent, 10> fingers;
};

struct RenderSpec {
  std::size_t image_size = 64;
  double capture_noise_sigma = 0.05;
  int iris_captures = 2;         // per eye
  int fingerprint_captures = 10;  // per finger
};

std::string subject_id(std::size_t index, std::size_t n_subjects);

/// Latents of subject `index`, drawn from the stream derive_seed(seed, {index}).
SubjectLatent make_subject_latent(std::size_t index, std::size_t n_subjects, double rho, std::uint64_t seed);

/// Noise-free renderings; pixel values in [0, 1].
GrayImage render_iris(const Latent& latent, std::size_t size);
GrayImage render_fingerprint(const Latent& latent, std::size_t size);

/// Adds N(0, sigma^2) per pixel from the given seed, then clamps to [0, 1].
GrayImage add_capture_noise(const GrayImage& clean, double sigma, std::uint64_t capture_seed);

/// Trait codes for capture seeds: 0 = left iris, 1 = right iris, 2 + f = finger f.
std::uint64_t capture_seed(std::uint64_t seed, std::size_t subject_index, int trait_code, int capture);

/// Renders every capture of every subject into out_dir/images and writes
/// out_dir/manifest.jsonl. Returns the manifest.
Manifest generate_cohort(std::size_t n_subjects, double rho, const RenderSpec& spec, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

}  // namespace biov
