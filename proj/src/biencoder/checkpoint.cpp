#include "biov/biencoder/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>
#include <set>

#include "biov/core/digest.hpp"
#include "biov/core/errors.hpp"

namespace biov {

using ojson = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_tensor(std::string& out, const std::string& name, const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  out.push_back(0);  // dtype f32
  out.push_back(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(source_, pos_, std::string("truncated while reading ") + what);
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(take(1, what)[0]); }

 private:
  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const BiEncoderModel<float>& model) {
  const auto& p = model.params();
  for (const auto* group : {&p.params, &p.buffers}) {
    for (const auto& [name, t] : *group) {
      if (!t.all_finite()) throw NumericalError(name, "refusing to save a non-finite tensor");
    }
  }
  const auto& cfg = model.config();
  ojson header;
  header["backbone"] = to_string(cfg.backbone);
  header["mode"] = to_string(cfg.mode);
  header["embedding_dim"] = kEmbeddingDim;
  header["image_size"] = cfg.image_size;
  header["task"] = cfg.task;
  header["config_hash"] = cfg.config_hash;
  header["tensor_count"] = p.params.size() + p.buffers.size();
  ojson buffers = ojson::array();
  for (const auto& [name, _] : p.buffers) buffers.push_back(name);
  header["buffers"] = std::move(buffers);
  const std::string h = header.dump();

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& [name, t] : p.params) put_tensor(out, name, t);
  for (const auto& [name, t] : p.buffers) put_tensor(out, name, t);
  return out;
}

void save_checkpoint(const BiEncoderModel<float>& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}

BiEncoderModel<float> decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.take(8, "magic") != std::string_view(kCheckpointMagic, 8)) throw ParseError(source, 0, "bad magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError(source, 8, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = r.u32("header length");
  const std::size_t header_at = r.offset();
  const auto header_text = r.take(header_len, "header");

  ModelConfig cfg;
  std::size_t tensor_count = 0;
  std::set<std::string> buffer_names;
  try {
    const auto h = ojson::parse(header_text);
    cfg.backbone = parse_backbone(h.at("backbone").get<std::string>());
    cfg.mode = parse_encoder_mode(h.at("mode").get<std::string>());
    cfg.image_size = h.at("image_size").get<std::size_t>();
    cfg.task = h.at("task").get<std::string>();
    cfg.config_hash = h.at("config_hash").get<std::string>();
    tensor_count = h.at("tensor_count").get<std::size_t>();
    for (const auto& b : h.at("buffers")) buffer_names.insert(b.get<std::string>());
    if (h.at("embedding_dim").get<std::size_t>() != kEmbeddingDim) {
      throw MismatchError("checkpoint embedding dim differs from " + std::to_string(kEmbeddingDim));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(source, header_at, std::string("header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(source, header_at, std::string("header: ") + e.what());
  }

  BiEncoderModel<float> model(cfg);
  std::map<std::string, Shape> expected;
  for (const auto& d : model.param_decls()) expected.emplace(d.name, d.shape);

  ParamSet<float> loaded;
  for (std::size_t i = 0; i < tensor_count; ++i) {
    const std::size_t at = r.offset();
    const std::uint32_t name_len = r.u32("tensor name length");
    const std::string name(r.take(name_len, "tensor name"));
    const std::uint8_t dtype = r.u8("dtype");
    if (dtype != 0) throw ParseError(source, at, "unsupported dtype code " + std::to_string(dtype));
    const std::uint8_t ndim = r.u8("ndim");
    Shape shape(ndim);
    for (auto& d : shape) d = r.u32("dims");
    std::size_t count = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw ParseError(source, at, "zero dimension in tensor '" + name + "'");
      count *= d;
    }
    auto it = expected.find(name);
    if (it == expected.end()) throw MismatchError("checkpoint tensor '" + name + "' is not part of the architecture");
    if (it->second != shape) {
      throw MismatchError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) + ", expected " +
                          shape_to_string(it->second));
    }
    const auto payload = r.take(count * sizeof(float), "tensor payload");
    std::vector<float> data(count);
    std::memcpy(data.data(), payload.data(), payload.size());
    auto& target = buffer_names.count(name) ? loaded.buffers : loaded.params;
    if (!target.emplace(name, Tensor<float>(shape, std::move(data))).second) {
      throw ParseError(source, at, "duplicate tensor '" + name + "'");
    }
  }
  if (!r.done()) throw ParseError(source, r.offset(), "trailing bytes after tensor table");
  for (const auto& d : model.param_decls()) {
    const auto& group = d.trainable ? loaded.params : loaded.buffers;
    if (!group.count(d.name)) throw MismatchError("checkpoint is missing tensor '" + d.name + "'");
  }
  model.params() = std::move(loaded);
  return model;
}

BiEncoderModel<float> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

BiEncoderModel<float> load_checkpoint_as(const std::filesystem::path& path, BackboneKind expected,
                                         std::optional<EncoderMode> mode) {
  auto m = load_checkpoint(path);
  if (m.config().backbone != expected) {
    throw MismatchError("checkpoint '" + path.string() + "' holds a " + std::string(to_string(m.config().backbone)) +
                        " model, expected " + std::string(to_string(expected)));
  }
  if (mode && m.config().mode != *mode) {
    throw MismatchError("checkpoint '" + path.string() + "' is " + std::string(to_string(m.config().mode)) +
                        ", expected " + std::string(to_string(*mode)));
  }
  return m;
}

void init_from_pretrained(BiEncoderModel<float>& cross, const BiEncoderModel<float>& iris,
                          const BiEncoderModel<float>& fp) {
  if (cross.config().mode != EncoderMode::two_tower) {
    throw MismatchError("init_from_pretrained: target model must be two-tower");
  }
  struct Source {
    const BiEncoderModel<float>* model;
    Tower tower;
    const char* expected_task;
  };
  for (const Source& s : {Source{&iris, Tower::A, "iris-iris"}, Source{&fp, Tower::B, "fp-fp"}}) {
    const auto& c = s.model->config();
    if (c.mode != EncoderMode::shared) throw MismatchError("init_from_pretrained: source checkpoints must be shared-mode");
    if (c.backbone != cross.config().backbone) {
      throw MismatchError("init_from_pretrained: backbone kind mismatch (" + std::string(to_string(c.backbone)) +
                          " vs " + std::string(to_string(cross.config().backbone)) + ")");
    }
    if (c.image_size != cross.config().image_size) throw MismatchError("init_from_pretrained: image size mismatch");
    if (!c.task.empty() && c.task != s.expected_task) {
      throw MismatchError(std::string("init_from_pretrained: expected a ") + s.expected_task + " checkpoint, got " +
                          c.task);
    }
  }
  ParamSet<float> next = cross.params();
  auto copy_group = [](const std::map<std::string, Tensor<float>>& src, std::map<std::string, Tensor<float>>& dst,
                       const std::string& prefix) {
    for (const auto& [name, t] : src) {
      auto it = dst.find(prefix + name);
      if (it == dst.end()) throw MismatchError("init_from_pretrained: no target for '" + prefix + name + "'");
      if (it->second.shape() != t.shape()) throw MismatchError("init_from_pretrained: shape mismatch at '" + name + "'");
      it->second = t;
    }
  };
  for (const Source& s : {Source{&iris, Tower::A, ""}, Source{&fp, Tower::B, ""}}) {
    const std::string prefix = tower_prefix(EncoderMode::two_tower, s.tower);
    copy_group(s.model->params().params, next.params, prefix);
    copy_group(s.model->params().buffers, next.buffers, prefix);
  }
  cross.params() = std::move(next);
}

void init_from_pretrained(BiEncoderModel<float>& cross, const std::filesystem::path& iris_ckpt,
                          const std::filesystem::path& fp_ckpt) {
  const auto iris = load_checkpoint_as(iris_ckpt, cross.config().backbone, EncoderMode::shared);
  const auto fp = load_checkpoint_as(fp_ckpt, cross.config().backbone, EncoderMode::shared);
  init_from_pretrained(cross, iris, fp);
}

}  // namespace biov
