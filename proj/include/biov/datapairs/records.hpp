#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace biov {

enum class Modality { iris, fingerprint };
enum class Side { left, right };

std::string_view to_string(Modality m);
std::string_view to_string(Side s);  // "L" / "R"
Modality parse_modality(std::string_view s);
Side parse_side(std::string_view s);

/// One image plus its identity metadata. `path` is relative to the
/// directory holding the manifest.
struct SampleRecord {
  std::string path;
  std::string subject;
  Modality modality = Modality::iris;
  std::optional<Side> side;
  std::optional<int> finger;
  int capture = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Iris records carry a side and no finger; fingerprint records carry a
/// finger in 0..9 and no side. Throws InvalidArgument otherwise.
void validate_record(const SampleRecord& record);

/// {"path", "subject", "modality", "side", "finger", "capture"} in that order.
std::string record_to_json(const SampleRecord& record);
SampleRecord record_from_json(std::string_view line, const std::string& source = "<manifest>", std::size_t line_no = 0);

struct Manifest {
  std::filesystem::path root;  // directory the record paths are relative to
  std::vector<SampleRecord> records;

  std::filesystem::path resolve(const SampleRecord& r) const { return root / r.path; }
};

/// JSON-lines manifest, one record per line.
Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<SampleRecord>& records);

}  // namespace biov
