#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "biov/datapairs/records.hpp"

namespace biov {

enum class Task { iris_iris, fp_fp, cross };
enum class SplitName { train, val, test };

std::string_view to_string(Task t);  // "iris-iris", "fp-fp", "cross"
std::string_view to_string(SplitName s);
Task parse_task(std::string_view s);
SplitName parse_split_name(std::string_view s);

struct SubjectSplit {
  std::vector<std::string> train, val, test;  // each sorted
  std::uint64_t seed = 0;

  const std::vector<std::string>& subjects(SplitName s) const;
  friend bool operator==(const SubjectSplit&, const SubjectSplit&) = default;
};

/// Sorts and de-duplicates the ids, shuffles them with the seed and cuts
/// round(0.8n) / round(0.1n) / rest. Needs at least 10 subjects.
SubjectSplit split_subjects(std::vector<std::string> subjects, std::uint64_t seed);

std::string split_to_json(const SubjectSplit& split);
SubjectSplit split_from_json(std::string_view text, const std::string& source = "<split>");

struct PairSample {
  SampleRecord a;
  SampleRecord b;
  int label = 0;  // 1 = same subject

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

struct PairSet {
  Task task = Task::iris_iris;
  SplitName split = SplitName::train;
  std::vector<PairSample> pairs;

  std::size_t positives() const;
  std::size_t negatives() const { return pairs.size() - positives(); }
  friend bool operator==(const PairSet&, const PairSet&) = default;
};

/// Pairs for one split. Positives follow the task recipe:
///   iris-iris: every (left capture, right capture) of a subject, a = left;
///   fp-fp:     every unordered pair of captures of different fingers;
///   cross:     every (iris, fingerprint) of a subject, a = iris.
/// Negatives are drawn uniformly without replacement from the eligible
/// cross-subject pairs of the same shape until the set is balanced.
PairSet build_pair_set(const std::vector<SampleRecord>& records, const SubjectSplit& split, Task task,
                       SplitName which, std::uint64_t seed);

struct PairSets {
  PairSet train, val, test;
  const PairSet& get(SplitName s) const;
};

PairSets build_pairs(const std::vector<SampleRecord>& records, const SubjectSplit& split, Task task,
                     std::uint64_t seed);

/// Training split only. Oversamples each subject's positives with replacement
/// up to the largest per-subject positive count, then tops up negatives
/// (resampled with replacement) to restore balance.
PairSet normalize_frequency(const PairSet& pairs, std::uint64_t seed);

/// JSON-lines: {"a_path", "b_path", "label", "task", "split"}.
void write_pair_set(const std::filesystem::path& file, const PairSet& set);
/// Paths are resolved against the manifest's records.
PairSet read_pair_set(const std::filesystem::path& file, const Manifest& manifest);

/// On-disk layout of a pairs directory: pairs.json (task, seed, manifest path
/// relative to the directory), split.json, and train/val/test .jsonl files.
struct PairsDirInfo {
  Task task = Task::iris_iris;
  std::uint64_t seed = 0;
  std::filesystem::path manifest;  // absolute after reading
};

void write_pairs_dir(const std::filesystem::path& dir, const std::filesystem::path& manifest_file,
                     const SubjectSplit& split, const PairSets& sets, std::uint64_t seed);
PairsDirInfo read_pairs_info(const std::filesystem::path& dir);
std::filesystem::path pair_file(const std::filesystem::path& dir, SplitName s);
SubjectSplit read_split(const std::filesystem::path& dir);

}  // namespace biov
