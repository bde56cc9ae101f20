#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "slsrec/error.hpp"
#include "slsrec/model.hpp"

namespace slsrec {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian container, see docs/checkpoint_format.md:
//   "SLSRCKPT" | u32 version | u32 d | u32 V | u32 l | u32 k_max
//   | u64 len, config text | u32 count
//   | count x (u32 len, name | u32 rows | u32 cols | rows*cols f64, row-major)
struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t d = 0;
  std::uint32_t item_count = 0;
  std::uint32_t l = 0;
  std::uint32_t k_max = 0;
};

struct Checkpoint {
  CheckpointHeader header;
  std::string config_text;  // resolved RunConfig, for provenance
  ParamStore params;
};

class CheckpointVersionError : public IoError {
 public:
  CheckpointVersionError(std::uint32_t found, std::uint32_t supported);
  std::uint32_t found;
  std::uint32_t supported;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace slsrec
