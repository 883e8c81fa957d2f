#pragma once

#include <string>
#include <vector>

#include "biov/core/rng.hpp"
#include "biov/datapairs/records.hpp"

namespace biov::testing {

inline SampleRecord iris_record(const std::string& subject, Side side, int capture) {
  SampleRecord r;
  r.subject = subject;
  r.modality = Modality::iris;
  r.side = side;
  r.capture = capture;
  r.path = subject + "_iris_" + std::string(to_string(side)) + "_c" + std::to_string(capture) + ".pgm";
  return r;
}

inline SampleRecord fp_record(const std::string& subject, int finger, int capture) {
  SampleRecord r;
  r.subject = subject;
  r.modality = Modality::fingerprint;
  r.finger = finger;
  r.capture = capture;
  r.path = subject + "_fp_f" + std::to_string(finger) + "_c" + std::to_string(capture) + ".pgm";
  return r;
}

/// Records only (no images): per subject, `iris` captures per eye and `fp`
/// captures per finger.
inline std::vector<SampleRecord> uniform_records(int n_subjects, int iris, int fp) {
  std::vector<SampleRecord> out;
  for (int s = 0; s < n_subjects; ++s) {
    const std::string id = "P" + std::to_string(100 + s);
    for (Side side : {Side::left, Side::right}) {
      for (int c = 0; c < iris; ++c) out.push_back(iris_record(id, side, c));
    }
    for (int f = 0; f < 10; ++f) {
      for (int c = 0; c < fp; ++c) out.push_back(fp_record(id, f, c));
    }
  }
  return out;
}

/// Ragged cohort: each subject gets 1-3 captures per eye, a random subset of
/// fingers and 1-2 captures per finger.
inline std::vector<SampleRecord> ragged_records(int n_subjects, Rng& rng) {
  std::vector<SampleRecord> out;
  for (int s = 0; s < n_subjects; ++s) {
    const std::string id = "R" + std::to_string(1000 + s);
    for (Side side : {Side::left, Side::right}) {
      const int n = 1 + static_cast<int>(rng.index(3));
      for (int c = 0; c < n; ++c) out.push_back(iris_record(id, side, c));
    }
    for (int f = 0; f < 10; ++f) {
      if (f >= 2 && rng.uniform() < 0.3) continue;  // at least fingers 0 and 1
      const int n = 1 + static_cast<int>(rng.index(2));
      for (int c = 0; c < n; ++c) out.push_back(fp_record(id, f, c));
    }
  }
  return out;
}

}  // namespace biov::testing
