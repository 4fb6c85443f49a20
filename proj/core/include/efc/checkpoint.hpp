#pragma once

#include <string>

#include "efc/model.hpp"

namespace efc {

// Checkpoint container:
//   "EFCKPT01" (8B) | u32 LE header length | JSON header | raw f32 payloads
// The JSON header holds {format_version, kind, arch, seed, tensors: [{name,
// shape, byte_offset, byte_len}], cdf_tables}. Offsets are relative to the
// start of the payload section; payload floats are little-endian, written in
// manifest order (names sorted ascending).
//
// cdf_tables is null until freeze() has run; afterwards it stores
// {y_min: [...], y_max: [...], cum: [[...], ...]} per channel.

void save_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_bundle(const std::string& path);  // format_error / io_error

void save_teacher(const TeacherModel& teacher, const std::string& path);
TeacherModel load_teacher(const std::string& path);

// kind field of a checkpoint file without loading tensors.
std::string checkpoint_kind(const std::string& path);

}  // namespace efc
