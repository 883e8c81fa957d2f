#include "biov/datapairs/records.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "biov/core/errors.hpp"

namespace biov {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Modality m) { return m == Modality::iris ? "iris" : "fingerprint"; }
std::string_view to_string(Side s) { return s == Side::left ? "L" : "R"; }

Modality parse_modality(std::string_view s) {
  if (s == "iris") return Modality::iris;
  if (s == "fingerprint") return Modality::fingerprint;
  throw InvalidArgument("unknown modality '" + std::string(s) + "'");
}

Side parse_side(std::string_view s) {
  if (s == "L") return Side::left;
  if (s == "R") return Side::right;
  throw InvalidArgument("unknown side '" + std::string(s) + "'");
}

void validate_record(const SampleRecord& r) {
  if (r.path.empty() || r.subject.empty()) throw InvalidArgument("record with empty path or subject");
  if (r.modality == Modality::iris) {
    if (!r.side || r.finger) throw InvalidArgument("iris record '" + r.path + "' needs a side and no finger");
  } else {
    if (r.side || !r.finger) throw InvalidArgument("fingerprint record '" + r.path + "' needs a finger and no side");
    if (*r.finger < 0 || *r.finger > 9) throw InvalidArgument("fingerprint record '" + r.path + "': finger out of 0..9");
  }
  if (r.capture < 0) throw InvalidArgument("record '" + r.path + "': negative capture index");
}

std::string record_to_json(const SampleRecord& r) {
  ojson j;
  j["path"] = r.path;
  j["subject"] = r.subject;
  j["modality"] = to_string(r.modality);
  j["side"] = r.side ? ojson(std::string(to_string(*r.side))) : ojson(nullptr);
  j["finger"] = r.finger ? ojson(*r.finger) : ojson(nullptr);
  j["capture"] = r.capture;
  return j.dump();
}

SampleRecord record_from_json(std::string_view line, const std::string& source, std::size_t line_no) {
  try {
    const auto j = ojson::parse(line);
    SampleRecord r;
    r.path = j.at("path").get<std::string>();
    r.subject = j.at("subject").get<std::string>();
    r.modality = parse_modality(j.at("modality").get<std::string>());
    if (!j.at("side").is_null()) r.side = parse_side(j.at("side").get<std::string>());
    if (!j.at("finger").is_null()) r.finger = j.at("finger").get<int>();
    r.capture = j.at("capture").get<int>();
    validate_record(r);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, line_no, e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(source, line_no, e.what());
  }
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError(file.string(), "cannot open manifest");
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    m.records.push_back(record_from_json(line, file.string(), line_no));
  }
  return m;
}

void write_manifest(const std::filesystem::path& file, const std::vector<SampleRecord>& records) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(file.string(), "cannot open manifest for writing");
  for (const auto& r : records) out << record_to_json(r) << '\n';
  if (!out) throw IoError(file.string(), "write failed");
}

}  // namespace biov
