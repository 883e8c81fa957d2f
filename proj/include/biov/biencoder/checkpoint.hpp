#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "biov/biencoder/biencoder.hpp"

namespace biov {

inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'O', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: magic "BIOCKPT1", u32 version, u32 header length, JSON
/// header, then per tensor: u32 name length, name, u8 dtype (0 = f32), u8
/// ndim, u32 dims, little-endian payload. Parameters come first, then
/// buffers; the header lists the buffer names.
std::string encode_checkpoint(const BiEncoderModel<float>& model);
void save_checkpoint(const BiEncoderModel<float>& model, const std::filesystem::path& path);

/// Throws ParseError (with byte offset) on corrupt or truncated input and
/// MismatchError when the tensors do not fit the declared architecture.
BiEncoderModel<float> decode_checkpoint(std::string_view bytes, const std::string& source = "<checkpoint>");
BiEncoderModel<float> load_checkpoint(const std::filesystem::path& path);

/// Load, requiring a backbone kind (and mode, if given).
BiEncoderModel<float> load_checkpoint_as(const std::filesystem::path& path, BackboneKind expected,
                                         std::optional<EncoderMode> mode = std::nullopt);

/// Copies a shared-mode iris model into tower A and a shared-mode fingerprint
/// model into tower B of a two-tower model, projection heads included.
void init_from_pretrained(BiEncoderModel<float>& cross_model, const BiEncoderModel<float>& iris_model,
                          const BiEncoderModel<float>& fp_model);
void init_from_pretrained(BiEncoderModel<float>& cross_model, const std::filesystem::path& iris_ckpt,
                          const std::filesystem::path& fp_ckpt);

}  // namespace biov
