#pragma once

// Checkpoint container.
//
// Binary file, all integers little-endian:
//
//   "HRGC"                      4-byte magic
//   u32 version                 currently 1
//   u32 record_count
//   record_count times:
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u32 n, u32 c, u32 h, u32 w
//     n*c*h*w float32 values, little-endian, NCHW order
//   u32 meta_length, meta bytes  sorted "key=value" lines
//
// Records are written in lexicographic name order. A human-readable manifest is
// written next to the binary as "<file>.manifest": the metadata lines followed
// by one "tensor <name> <n> <c> <h> <w>" line per record.

#include "hrg/config.hpp"
#include "hrg/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hrg {

struct Checkpoint {
  std::vector<std::pair<std::string, Tensorf>> records;
  Config meta;

  const Tensorf* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace hrg
