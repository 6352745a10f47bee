#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plcpatch {

// Region tags follow the layout of a runtime-hosted control application:
// app stack below runtime stack, below code, below the address table,
// below the data section. MMIO sits below everything.
enum class RegionKind : uint8_t {
    Mmio,
    AppStack,
    RuntimeStack,
    RuntimeCode,
    AppCode,
    AddressTable,
    Data,
};

const char* region_name(RegionKind k);
std::optional<RegionKind> region_from_name(const std::string& name);

struct Region {
    RegionKind kind;
    uint32_t base = 0;
    uint32_t length = 0;
    std::vector<uint8_t> data;  // always `length` bytes once attached to an image

    uint32_t end() const { return base + length; }
    bool contains(uint32_t addr) const { return addr >= base && addr < end(); }
};

class SnapshotError : public std::runtime_error {
public:
    explicit SnapshotError(const std::string& what) : std::runtime_error(what) {}
};
class ManifestParseError : public SnapshotError {
public:
    using SnapshotError::SnapshotError;
};
class RegionOverlapError : public SnapshotError {
public:
    using SnapshotError::SnapshotError;
};
class MissingRegionError : public SnapshotError {
public:
    using SnapshotError::SnapshotError;
};

// Byte-addressable memory assembled from tagged regions. Bytes are stored
// per-region so dumps and hashes are deterministic.
class MemoryImage {
public:
    MemoryImage() = default;

    // Throws RegionOverlapError / MissingRegionError / SnapshotError on a
    // layout that violates the region-order contract.
    void add_region(Region r);
    void finalize();  // validates order + mandatory regions

    bool mapped(uint32_t addr) const { return find_region(addr) != nullptr; }
    bool mapped_range(uint32_t addr, uint32_t len) const;

    RegionKind classify(uint32_t addr) const;  // throws if unmapped; see try_classify
    std::optional<RegionKind> try_classify(uint32_t addr) const;

    const Region* find_region(uint32_t addr) const;
    const Region* region(RegionKind kind) const;
    Region* region(RegionKind kind);
    const std::vector<Region>& regions() const { return regions_; }

    uint8_t read8(uint32_t addr) const;
    uint32_t read32(uint32_t addr) const;  // little-endian
    void write8(uint32_t addr, uint8_t v);
    void write32(uint32_t addr, uint32_t v);

    // Accessors for fields carried by the snapshot manifest.
    uint32_t app_entry = 0;
    uint32_t app_load_offset = 0x20010;  // common runtime load offset default
    uint32_t initial_sp = 0;
    uint32_t initial_lr = 0;
    uint32_t gate_addr = 0;     // 0 = no gate cell
    uint64_t cycles_done = 0;   // scan cycles already executed before the snapshot
    std::vector<uint8_t> mmio_input;   // exploit/sensor bytes staged at MMIO base
    std::vector<uint8_t> legit_input;  // optional benign input bytes (not installed)

    // MMIO convention: first half of the region carries inputs, second half
    // outputs.
    uint32_t mmio_in_base() const;
    uint32_t mmio_out_base() const;
    uint32_t mmio_half() const;

    void install_mmio_input(const std::vector<uint8_t>& bytes);
    std::vector<uint8_t> read_mmio_out() const;

    bool operator==(const MemoryImage& other) const;

private:
    std::vector<Region> regions_;  // kept sorted by base
};

}  // namespace plcpatch
