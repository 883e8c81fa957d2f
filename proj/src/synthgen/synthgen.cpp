#include "biov/synthgen/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "biov/core/errors.hpp"
#include "biov/core/parallel.hpp"
#include "biov/core/rng.hpp"

namespace biov {

namespace {

constexpr double kPi = std::numbers::pi;

Latent gaussian_latent(Rng& rng) {
  Latent v(kLatentDim);
  for (auto& x : v) x = rng.normal();
  return v;
}

void to_unit_rms(Latent& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double rms = std::sqrt(ss / static_cast<double>(v.size()));
  if (rms > 0.0) {
    for (auto& x : v) x /= rms;
  }
}

Latent trait_latent(const Latent& core, double rho, Rng& rng) {
  Latent noise = gaussian_latent(rng);  // always drawn so streams line up across rho
  if (rho == 1.0) return core;
  Latent t(kLatentDim);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (std::size_t i = 0; i < kLatentDim; ++i) t[i] = a * core[i] + b * noise[i];
  to_unit_rms(t);
  return t;
}

// N(0,1) coordinate -> roughly uniform in (-1, 1).
double spread(double z) { return std::erf(z / std::numbers::sqrt2); }

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Pixel centre in [-1, 1] coordinates.
double coord(std::size_t i, std::size_t size) {
  return (static_cast<double>(i) + 0.5) / static_cast<double>(size) * 2.0 - 1.0;
}

void check_latent(const Latent& z) {
  if (z.size() != kLatentDim) throw InvalidArgument("latent must have dimension " + std::to_string(kLatentDim));
}

}  // namespace

std::string subject_id(std::size_t index, std::size_t n_subjects) {
  std::size_t width = 3;
  for (std::size_t n = n_subjects > 0 ? n_subjects - 1 : 0; n >= 1000; n /= 10) ++width;
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return "S" + digits;
}

SubjectLatent make_subject_latent(std::size_t index, std::size_t n_subjects, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("rho must lie in [0, 1]");
  Rng rng(derive_seed(seed, {index}));
  SubjectLatent s;
  s.subject_id = subject_id(index, n_subjects);
  s.core = gaussian_latent(rng);
  to_unit_rms(s.core);
  s.left_iris = trait_latent(s.core, rho, rng);
  s.right_iris = trait_latent(s.core, rho, rng);
  for (auto& f : s.fingers) f = trait_latent(s.core, rho, rng);
  return s;
}

// Concentric bands whose radial frequencies and phases come from the latent,
// modulated by angular harmonics; dark pupil, bright sclera.
GrayImage render_iris(const Latent& z, std::size_t size) {
  check_latent(z);
  const double freq_scale = 1.0 + 0.3 * spread(z[0]);
  const double rotation = kPi * spread(z[1]);
  const double pupil = 0.30 + 0.06 * spread(z[2]);
  const double outer = 0.86 + 0.04 * spread(z[16]);
  const double contrast = 0.30 + 0.05 * spread(z[17]);

  constexpr int kBands = 3;
  constexpr int kHarmonic[kBands] = {3, 5, 7};
  double freq[kBands], phase[kBands], ang_phase[kBands], depth[kBands], weight[kBands];
  double norm = 0.0;
  for (int k = 0; k < kBands; ++k) {
    freq[k] = freq_scale * (1.0 + 0.7 * k + 0.2 * spread(z[3 + k]));
    phase[k] = kPi * spread(z[6 + k]);
    ang_phase[k] = kPi * spread(z[9 + k]);
    depth[k] = 0.5 + 0.4 * spread(z[12 + k]);
    weight[k] = 1.0 + 0.5 * spread(z[28 + k]);
    norm += weight[k] * (1.0 + depth[k]);
  }
  // Crypt-like blobs placed by the remaining coordinates.
  constexpr int kBlobs = 4;
  double blob_r[kBlobs], blob_t[kBlobs];
  for (int b = 0; b < kBlobs; ++b) {
    blob_r[b] = 0.5 + 0.4 * spread(z[19 + 2 * b]);
    blob_t[b] = kPi * spread(z[20 + 2 * b]);
  }
  const double blob_gain = 0.15 + 0.1 * spread(z[27]);

  GrayImage img(size, size);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = coord(i, size);
    for (std::size_t j = 0; j < size; ++j) {
      const double x = coord(j, size);
      const double r = std::hypot(x, y);
      const double theta = std::atan2(y, x);
      const double u = std::clamp((r - pupil) / (outer - pupil), 0.0, 1.0);
      double tex = 0.0;
      for (int k = 0; k < kBands; ++k) {
        tex += weight[k] * std::cos(2.0 * kPi * freq[k] * u + phase[k]) *
               (1.0 + depth[k] * std::cos(kHarmonic[k] * (theta - rotation) + ang_phase[k]));
      }
      tex /= norm;
      double blobs = 0.0;
      for (int b = 0; b < kBlobs; ++b) {
        const double bx = (pupil + blob_r[b] * (outer - pupil)) * std::cos(blob_t[b] + rotation);
        const double by = (pupil + blob_r[b] * (outer - pupil)) * std::sin(blob_t[b] + rotation);
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        blobs += std::exp(-d2 / 0.006);
      }
      const double iris = 0.5 + contrast * tex - blob_gain * std::min(blobs, 1.0);
      const double in_iris = smoothstep(pupil - 0.03, pupil + 0.03, r);
      const double in_sclera = smoothstep(outer - 0.03, outer + 0.03, r);
      const double v = (1.0 - in_iris) * 0.08 + in_iris * ((1.0 - in_sclera) * iris + in_sclera * 0.85);
      img.at(i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

// Ridges as a sum of oriented sinusoids following a smooth orientation field
// centred on a latent-placed core, inside an elliptical contact region.
GrayImage render_fingerprint(const Latent& z, std::size_t size) {
  check_latent(z);
  const double ridge_freq = 3.2 * (1.0 + 0.3 * spread(z[0]));  // cycles per half-width
  const double theta0 = 0.5 * kPi * spread(z[1]);
  const double curl = 0.8 * spread(z[2]);
  const double gx = 0.6 * spread(z[3]);
  const double gy = 0.6 * spread(z[4]);
  const double cx = 0.3 * spread(z[5]);
  const double cy = 0.3 * spread(z[6]);
  const double split = 0.35 * spread(z[7]);
  const double phase1 = kPi * spread(z[8]);
  const double phase2 = kPi * spread(z[9]);
  const double w2 = 0.45 + 0.2 * spread(z[10]);
  const double freq2 = ridge_freq * (1.0 + 0.15 * spread(z[11]));
  const double whorl = 0.6 * spread(z[12]);
  const double ax = 0.72 + 0.1 * spread(z[13]);
  const double ay = 0.90 + 0.05 * spread(z[14]);
  const double press_x = 0.8 * spread(z[15]);
  const double press_y = 0.8 * spread(z[16]);
  const double contrast = 0.33 + 0.05 * spread(z[17]);

  GrayImage img(size, size);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = coord(i, size);
    for (std::size_t j = 0; j < size; ++j) {
      const double x = coord(j, size);
      const double dx = x - cx, dy = y - cy;
      const double theta = theta0 + gx * dx + gy * dy + curl * (dx * dx - dy * dy) +
                           whorl * std::exp(-(dx * dx + dy * dy) / 0.15) * (dx * dy) * 4.0;
      const double p1 = std::cos(2.0 * kPi * ridge_freq * (x * std::cos(theta) + y * std::sin(theta)) + phase1);
      const double t2 = theta + split;
      const double p2 = std::cos(2.0 * kPi * freq2 * (x * std::cos(t2) + y * std::sin(t2)) + phase2);
      const double pressure = 0.8 + 0.2 * std::cos(kPi * (press_x * x + press_y * y));
      const double ridges = pressure * (p1 + w2 * p2) / (1.0 + w2);
      const double e = (x / ax) * (x / ax) + (y / ay) * (y / ay);
      const double inside = 1.0 - smoothstep(0.85, 1.0, e);
      const double v = inside * (0.5 + contrast * ridges) + (1.0 - inside) * 0.92;
      img.at(i, j) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

GrayImage add_capture_noise(const GrayImage& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("capture noise sigma must be >= 0");
  GrayImage out = clean;
  Rng rng(seed);
  for (auto& p : out.pixels) {
    const double v = static_cast<double>(p) + sigma * rng.normal();
    p = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::uint64_t capture_seed(std::uint64_t seed, std::size_t subject_index, int trait_code, int capture) {
  return derive_seed(seed, {subject_index, 0xC0FFEEu, static_cast<std::uint64_t>(trait_code),
                            static_cast<std::uint64_t>(capture)});
}

Manifest generate_cohort(std::size_t n_subjects, double rho, const RenderSpec& spec, std::uint64_t seed,
                         const std::filesystem::path& out_dir) {
  if (n_subjects < 2) throw InvalidArgument("generate_cohort: need at least 2 subjects");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidArgument("generate_cohort: rho must lie in [0, 1]");
  if (spec.image_size < 8) throw InvalidArgument("generate_cohort: image_size must be at least 8");
  if (spec.iris_captures < 1 || spec.fingerprint_captures < 1) {
    throw InvalidArgument("generate_cohort: captures per trait must be at least 1");
  }
  const auto image_dir = out_dir / "images";
  std::error_code ec;
  std::filesystem::create_directories(image_dir, ec);
  if (ec) throw IoError(image_dir.string(), ec.message());

  std::vector<std::vector<SampleRecord>> per_subject(n_subjects);
  parallel_for(n_subjects, [&](std::size_t s) {
    const SubjectLatent lat = make_subject_latent(s, n_subjects, rho, seed);
    auto emit = [&](const GrayImage& clean, int trait_code, int capture, SampleRecord rec) {
      const GrayImage img =
          add_capture_noise(clean, spec.capture_noise_sigma, capture_seed(seed, s, trait_code, capture));
      write_pgm(out_dir / rec.path, img);
      per_subject[s].push_back(std::move(rec));
    };
    for (int side = 0; side < 2; ++side) {
      const GrayImage clean = render_iris(side == 0 ? lat.left_iris : lat.right_iris, spec.image_size);
      const char* tag = side == 0 ? "L" : "R";
      for (int c = 0; c < spec.iris_captures; ++c) {
        SampleRecord rec;
        rec.path = "images/" + lat.subject_id + "_iris_" + tag + "_c" + std::to_string(c) + ".pgm";
        rec.subject = lat.subject_id;
        rec.modality = Modality::iris;
        rec.side = side == 0 ? Side::left : Side::right;
        rec.capture = c;
        emit(clean, side, c, std::move(rec));
      }
    }
    for (int f = 0; f < 10; ++f) {
      const GrayImage clean = render_fingerprint(lat.fingers[static_cast<std::size_t>(f)], spec.image_size);
      for (int c = 0; c < spec.fingerprint_captures; ++c) {
        SampleRecord rec;
        rec.path = "images/" + lat.subject_id + "_fp_f" + std::to_string(f) + "_c" + std::to_string(c) + ".pgm";
        rec.subject = lat.subject_id;
        rec.modality = Modality::fingerprint;
        rec.finger = f;
        rec.capture = c;
        emit(clean, 2 + f, c, std::move(rec));
      }
    }
  });

  Manifest m;
  m.root = out_dir;
  for (auto& v : per_subject) {
    for (auto& r : v) m.records.push_back(std::move(r));
  }
  write_manifest(out_dir / "manifest.jsonl", m.records);
  return m;
}

}  // namespace biov
