#include "biov/datapairs/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "biov/core/digest.hpp"
#include "biov/core/errors.hpp"
#include "biov/core/rng.hpp"

namespace biov {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Task t) {
  switch (t) {
    case Task::iris_iris: return "iris-iris";
    case Task::fp_fp: return "fp-fp";
    case Task::cross: return "cross";
  }
  return "?";
}

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::train: return "train";
    case SplitName::val: return "val";
    case SplitName::test: return "test";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  if (s == "iris-iris") return Task::iris_iris;
  if (s == "fp-fp") return Task::fp_fp;
  if (s == "cross") return Task::cross;
  throw InvalidArgument("unknown task '" + std::string(s) + "' (expected iris-iris, fp-fp or cross)");
}

SplitName parse_split_name(std::string_view s) {
  if (s == "train") return SplitName::train;
  if (s == "val") return SplitName::val;
  if (s == "test") return SplitName::test;
  throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

const std::vector<std::string>& SubjectSplit::subjects(SplitName s) const {
  switch (s) {
    case SplitName::train: return train;
    case SplitName::val: return val;
    case SplitName::test: return test;
  }
  return test;
}

SubjectSplit split_subjects(std::vector<std::string> subjects, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const std::size_t n = subjects.size();
  if (n < 10) throw InvalidArgument("split_subjects: need at least 10 subjects, got " + std::to_string(n));
  Rng rng(derive_seed(seed, {0x5u}));
  rng.shuffle(subjects);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  SubjectSplit out;
  out.seed = seed;
  out.train.assign(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train),
                 subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(subjects.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), subjects.end());
  for (auto* v : {&out.train, &out.val, &out.test}) std::sort(v->begin(), v->end());
  return out;
}

std::string split_to_json(const SubjectSplit& split) {
  ojson j;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  j["seed"] = split.seed;
  return j.dump(2) + "\n";
}

SubjectSplit split_from_json(std::string_view text, const std::string& source) {
  try {
    const auto j = ojson::parse(text);
    SubjectSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, 0, e.what());
  }
}

std::size_t PairSet::positives() const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const PairSample& p) { return p.label == 1; }));
}

namespace {

// Uniform sample of `count` (i, j) with valid(i, j), without replacement
// while distinct pairs remain. Small candidate grids are enumerated; large ones use rejection
// sampling against a seen-set.
template <typename Valid>
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(std::size_t n_a, std::size_t n_b, bool unordered,
                                                              std::size_t count, Valid valid, Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (count == 0) return out;
  constexpr std::size_t kEnumerateLimit = std::size_t{1} << 22;
  if (n_a * n_b <= kEnumerateLimit) {
    std::vector<std::pair<std::size_t, std::size_t>> eligible;
    for (std::size_t i = 0; i < n_a; ++i) {
      for (std::size_t j = unordered ? i + 1 : 0; j < n_b; ++j) {
        if (valid(i, j)) eligible.emplace_back(i, j);
      }
    }
    if (eligible.empty()) throw InvalidArgument("no cross-subject pairs available for negatives");
    const std::size_t distinct = std::min(count, eligible.size());
    for (std::size_t k = 0; k < distinct; ++k) {
      const std::size_t pick = k + rng.index(eligible.size() - k);
      std::swap(eligible[k], eligible[pick]);
    }
    // Fewer eligible pairs than positives (tiny splits): every one is used,
    // then repeats keep the set balanced.
    out.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(distinct));
    while (out.size() < count) out.push_back(eligible[rng.index(eligible.size())]);
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 200 * count + 1000000) throw InvalidArgument("negative sampling did not converge");
    std::size_t i = rng.index(n_a), j = rng.index(n_b);
    if (unordered) {
      if (i == j) continue;
      if (i > j) std::swap(i, j);
    }
    if (!valid(i, j)) continue;
    if (!seen.insert(static_cast<std::uint64_t>(i) * n_b + j).second) continue;
    out.emplace_back(i, j);
  }
  return out;
}

std::uint64_t task_code(Task t) { return static_cast<std::uint64_t>(t); }
std::uint64_t split_code(SplitName s) { return static_cast<std::uint64_t>(s); }

}  // namespace

PairSet build_pair_set(const std::vector<SampleRecord>& records, const SubjectSplit& split, Task task,
                       SplitName which, std::uint64_t seed) {
  const auto& ids = split.subjects(which);
  if (ids.size() < 2) {
    throw InvalidArgument(std::string("split '") + std::string(to_string(which)) +
                          "' has fewer than 2 subjects; negatives impossible");
  }
  const std::set<std::string> members(ids.begin(), ids.end());

  // Records of this split grouped per subject, keeping manifest order.
  std::vector<const SampleRecord*> irises, lefts, rights, fps;
  for (const auto& r : records) {
    if (!members.count(r.subject)) continue;
    if (r.modality == Modality::iris) {
      irises.push_back(&r);
      (r.side == Side::left ? lefts : rights).push_back(&r);
    } else {
      fps.push_back(&r);
    }
  }
  auto by_subject = [](const std::vector<const SampleRecord*>& v) {
    std::map<std::string, std::vector<const SampleRecord*>> m;
    for (const auto* r : v) m[r->subject].push_back(r);
    return m;
  };

  PairSet out;
  out.task = task;
  out.split = which;
  auto add = [&](const SampleRecord* a, const SampleRecord* b, int label) { out.pairs.push_back({*a, *b, label}); };

  const std::vector<const SampleRecord*>* list_a = nullptr;
  const std::vector<const SampleRecord*>* list_b = nullptr;
  bool unordered = false;
  switch (task) {
    case Task::iris_iris: {
      if (lefts.empty() || rights.empty()) throw InvalidArgument("iris-iris pairs need left and right iris records");
      const auto ls = by_subject(lefts), rs = by_subject(rights);
      for (const auto& [subject, left] : ls) {
        auto it = rs.find(subject);
        if (it == rs.end()) continue;
        for (const auto* l : left) {
          for (const auto* r : it->second) add(l, r, 1);
        }
      }
      list_a = &lefts;
      list_b = &rights;
      break;
    }
    case Task::fp_fp: {
      if (fps.empty()) throw InvalidArgument("fp-fp pairs need fingerprint records");
      for (const auto& [subject, prints] : by_subject(fps)) {
        for (std::size_t i = 0; i < prints.size(); ++i) {
          for (std::size_t j = i + 1; j < prints.size(); ++j) {
            if (prints[i]->finger != prints[j]->finger) add(prints[i], prints[j], 1);
          }
        }
      }
      list_a = list_b = &fps;
      unordered = true;
      break;
    }
    case Task::cross: {
      if (irises.empty() || fps.empty()) throw InvalidArgument("cross pairs need iris and fingerprint records");
      const auto fs = by_subject(fps);
      for (const auto& [subject, iris] : by_subject(irises)) {
        auto it = fs.find(subject);
        if (it == fs.end()) continue;
        for (const auto* i : iris) {
          for (const auto* f : it->second) add(i, f, 1);
        }
      }
      list_a = &irises;
      list_b = &fps;
      break;
    }
  }
  const std::size_t n_pos = out.pairs.size();
  if (n_pos == 0) throw InvalidArgument("no positive pairs in split '" + std::string(to_string(which)) + "'");

  Rng rng(derive_seed(seed, {task_code(task), split_code(which)}));
  const auto& A = *list_a;
  const auto& B = *list_b;
  const auto picks = sample_pairs(
      A.size(), B.size(), unordered, n_pos, [&](std::size_t i, std::size_t j) { return A[i]->subject != B[j]->subject; },
      rng);
  for (const auto& [i, j] : picks) add(A[i], B[j], 0);
  return out;
}

const PairSet& PairSets::get(SplitName s) const {
  switch (s) {
    case SplitName::train: return train;
    case SplitName::val: return val;
    case SplitName::test: return test;
  }
  return test;
}

PairSets build_pairs(const std::vector<SampleRecord>& records, const SubjectSplit& split, Task task,
                     std::uint64_t seed) {
  return {build_pair_set(records, split, task, SplitName::train, seed),
          build_pair_set(records, split, task, SplitName::val, seed),
          build_pair_set(records, split, task, SplitName::test, seed)};
}

PairSet normalize_frequency(const PairSet& pairs, std::uint64_t seed) {
  if (pairs.pairs.empty()) throw InvalidArgument("normalize_frequency: empty pair set");
  if (pairs.split != SplitName::train) throw InvalidArgument("normalize_frequency applies to the training split only");
  std::map<std::string, std::vector<std::size_t>> pos_by_subject;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
    const auto& p = pairs.pairs[i];
    if (p.label == 1) {
      pos_by_subject[p.a.subject].push_back(i);
    } else {
      negatives.push_back(i);
    }
  }
  if (pos_by_subject.empty() || negatives.empty()) {
    throw InvalidArgument("normalize_frequency: pair set needs both positives and negatives");
  }
  std::size_t max_count = 0;
  for (const auto& [_, v] : pos_by_subject) max_count = std::max(max_count, v.size());

  Rng rng(derive_seed(seed, {0xF4u}));
  PairSet out = pairs;
  for (const auto& [_, idx] : pos_by_subject) {
    for (std::size_t k = idx.size(); k < max_count; ++k) {
      out.pairs.push_back(pairs.pairs[idx[rng.index(idx.size())]]);
    }
  }
  const std::size_t deficit = out.positives() - out.negatives();
  for (std::size_t k = 0; k < deficit; ++k) out.pairs.push_back(pairs.pairs[negatives[rng.index(negatives.size())]]);
  return out;
}

void write_pair_set(const std::filesystem::path& file, const PairSet& set) {
  std::string text;
  for (const auto& p : set.pairs) {
    ojson j;
    j["a_path"] = p.a.path;
    j["b_path"] = p.b.path;
    j["label"] = p.label;
    j["task"] = to_string(set.task);
    j["split"] = to_string(set.split);
    text += j.dump();
    text += '\n';
  }
  write_file(file, text);
}

PairSet read_pair_set(const std::filesystem::path& file, const Manifest& manifest) {
  std::unordered_map<std::string, const SampleRecord*> by_path;
  for (const auto& r : manifest.records) by_path.emplace(r.path, &r);
  std::ifstream in(file);
  if (!in) throw IoError(file.string(), "cannot open pair file");
  PairSet out;
  bool first = true;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = ojson::parse(line);
      const Task task = parse_task(j.at("task").get<std::string>());
      const SplitName split = parse_split_name(j.at("split").get<std::string>());
      if (first) {
        out.task = task;
        out.split = split;
        first = false;
      } else if (task != out.task || split != out.split) {
        throw ParseError(file.string(), line_no, "mixed task/split within one pair file");
      }
      auto lookup = [&](const std::string& key) {
        const auto path = j.at(key).get<std::string>();
        auto it = by_path.find(path);
        if (it == by_path.end()) throw ParseError(file.string(), line_no, "path not in manifest: " + path);
        return *it->second;
      };
      PairSample p{lookup("a_path"), lookup("b_path"), j.at("label").get<int>()};
      if (p.label != 0 && p.label != 1) throw ParseError(file.string(), line_no, "label must be 0 or 1");
      out.pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string(), line_no, e.what());
    } catch (const InvalidArgument& e) {
      throw ParseError(file.string(), line_no, e.what());
    }
  }
  if (out.pairs.empty()) throw ParseError(file.string(), 0, "empty pair file");
  return out;
}

std::filesystem::path pair_file(const std::filesystem::path& dir, SplitName s) {
  return dir / (std::string(to_string(s)) + ".jsonl");
}

void write_pairs_dir(const std::filesystem::path& dir, const std::filesystem::path& manifest_file,
                     const SubjectSplit& split, const PairSets& sets, std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), ec.message());
  const auto abs_dir = std::filesystem::absolute(dir);
  const auto rel = std::filesystem::absolute(manifest_file).lexically_proximate(abs_dir);
  ojson meta;
  meta["task"] = to_string(sets.train.task);
  meta["seed"] = seed;
  meta["manifest"] = rel.generic_string();
  write_file(dir / "pairs.json", meta.dump(2) + "\n");
  write_file(dir / "split.json", split_to_json(split));
  for (SplitName s : {SplitName::train, SplitName::val, SplitName::test}) write_pair_set(pair_file(dir, s), sets.get(s));
}

PairsDirInfo read_pairs_info(const std::filesystem::path& dir) {
  const auto file = dir / "pairs.json";
  const std::string text = read_file(file);
  try {
    const auto j = ojson::parse(text);
    PairsDirInfo info;
    info.task = parse_task(j.at("task").get<std::string>());
    info.seed = j.at("seed").get<std::uint64_t>();
    std::filesystem::path m = j.at("manifest").get<std::string>();
    info.manifest = m.is_absolute() ? m : std::filesystem::absolute(dir / m).lexically_normal();
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(file.string(), 0, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(file.string(), 0, e.what());
  }
}

SubjectSplit read_split(const std::filesystem::path& dir) {
  const auto file = dir / "split.json";
  return split_from_json(read_file(file), file.string());
}

}  // namespace biov
