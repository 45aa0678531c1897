#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "siamreid/autodiff.hpp"

namespace siamreid {

// Binary layout, little-endian:
//   "SVR1" | u32 entry count | entries...
//   entry: u16 name length | UTF-8 name | u8 dtype (0 = f32) | u8 rank | rank x u32 dims | f32 payload
// Entries are written in name order.
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, bad_dtype, unknown_name, shape_mismatch, missing_tensor };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind);

void export_checkpoint(const ParamMap<float>& params, const std::filesystem::path& file);

// Reads every entry without validating names.
ParamMap<float> read_checkpoint(const std::filesystem::path& file);

// Loads `file` into a copy of `like`: names and shapes must match exactly.
ParamMap<float> import_checkpoint(const ParamMap<float>& like, const std::filesystem::path& file);

}  // namespace siamreid
