#ifndef DNOC_CHECKPOINT_HPP
#define DNOC_CHECKPOINT_HPP

#include <map>
#include <string>

#include "dnoc/pipeline.hpp"

namespace dnoc {

struct Checkpoint {
  Model model;
  std::map<std::string, std::string> metadata;
};

/// Binary layout: "DNOCCKPT", u32 version, u32 metadata count with
/// (u32 len, bytes) key/value pairs, u32 group count with (u32 len, name,
/// u64 rows, u64 cols, row-major f64 values). Little-endian.
void save_checkpoint(const std::string& path, const Model& model, std::map<std::string, std::string> metadata = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dnoc

#endif  // DNOC_CHECKPOINT_HPP
