#pragma once

#include <filesystem>
#include <string>

#include "plcpatch/memory_image.hpp"

namespace plcpatch {

// On-disk snapshot: a line-oriented manifest plus one raw little-endian
// binary file per region. Grammar (docs/manifest.md):
//   region <NAME> base=0x... len=0x... file=<relative path>
//   entry=0x...           app_load_offset=0x...   (optional, default 0x20010)
//   sp=0x... lr=0x...     gate=0x...              cycles_done=<n>
//   mmio_input=<hex bytes>   legit_input=<hex bytes>
MemoryImage load_snapshot(const std::filesystem::path& manifest_path);

// Writes manifest + region files into dir; returns the manifest path.
// load_snapshot(dump_snapshot(img, dir)) reproduces img byte-for-byte.
std::filesystem::path dump_snapshot(const MemoryImage& img, const std::filesystem::path& dir);

std::string to_hex(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> from_hex(const std::string& hex);

}  // namespace plcpatch
