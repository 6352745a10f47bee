#include "plcpatch/memory_image.hpp"

#include <algorithm>

namespace plcpatch {

namespace {

struct RegionNameEntry {
    RegionKind kind;
    const char* name;
};

constexpr RegionNameEntry kRegionNames[] = {
    {RegionKind::Mmio, "MMIO"},
    {RegionKind::AppStack, "APP_STACK"},
    {RegionKind::RuntimeStack, "RUNTIME_STACK"},
    {RegionKind::RuntimeCode, "RUNTIME_CODE"},
    {RegionKind::AppCode, "APP_CODE"},
    {RegionKind::AddressTable, "ADDRESS_TABLE"},
    {RegionKind::Data, "DATA"},
};

// Rank used to check the required base ordering. MMIO is pinned lowest by
// convention; the rest follow the documented stack-to-data order.
int order_rank(RegionKind k) {
    switch (k) {
        case RegionKind::Mmio: return 0;
        case RegionKind::AppStack: return 1;
        case RegionKind::RuntimeStack: return 2;
        case RegionKind::RuntimeCode: return 3;
        case RegionKind::AppCode: return 3;  // code regions are peers
        case RegionKind::AddressTable: return 4;
        case RegionKind::Data: return 5;
    }
    return 0;
}

}  // namespace

const char* region_name(RegionKind k) {
    for (const auto& e : kRegionNames)
        if (e.kind == k) return e.name;
    return "?";
}

std::optional<RegionKind> region_from_name(const std::string& name) {
    for (const auto& e : kRegionNames)
        if (name == e.name) return e.kind;
    return std::nullopt;
}

void MemoryImage::add_region(Region r) {
    if (r.length == 0) throw SnapshotError("region " + std::string(region_name(r.kind)) + " has zero length");
    r.data.resize(r.length, 0);
    for (const auto& existing : regions_) {
        if (existing.kind == r.kind)
            throw SnapshotError(std::string("duplicate region ") + region_name(r.kind));
        bool disjoint = r.end() <= existing.base || r.base >= existing.end();
        if (!disjoint)
            throw RegionOverlapError(std::string("region ") + region_name(r.kind) + " overlaps " +
                                     region_name(existing.kind));
    }
    regions_.push_back(std::move(r));
    std::sort(regions_.begin(), regions_.end(),
              [](const Region& a, const Region& b) { return a.base < b.base; });
}

void MemoryImage::finalize() {
    if (!region(RegionKind::AppCode)) throw MissingRegionError("APP_CODE region is mandatory");
    if (!region(RegionKind::AddressTable)) throw MissingRegionError("ADDRESS_TABLE region is mandatory");
    int prev_rank = -1;
    for (const auto& r : regions_) {
        int rank = order_rank(r.kind);
        if (rank < prev_rank)
            throw SnapshotError("region order violates the stack/code/table/data layout");
        prev_rank = std::max(prev_rank, rank);
    }
    if (!region(RegionKind::AppCode)->contains(app_entry))
        throw SnapshotError("app_entry lies outside APP_CODE");
    if (!mmio_input.empty()) install_mmio_input(mmio_input);
}

bool MemoryImage::mapped_range(uint32_t addr, uint32_t len) const {
    const Region* r = find_region(addr);
    if (!r) return false;
    return addr + len <= r->end();
}

RegionKind MemoryImage::classify(uint32_t addr) const {
    auto k = try_classify(addr);
    if (!k) throw SnapshotError("classify: unmapped address");
    return *k;
}

std::optional<RegionKind> MemoryImage::try_classify(uint32_t addr) const {
    const Region* r = find_region(addr);
    if (!r) return std::nullopt;
    return r->kind;
}

const Region* MemoryImage::find_region(uint32_t addr) const {
    for (const auto& r : regions_)
        if (r.contains(addr)) return &r;
    return nullptr;
}

const Region* MemoryImage::region(RegionKind kind) const {
    for (const auto& r : regions_)
        if (r.kind == kind) return &r;
    return nullptr;
}

Region* MemoryImage::region(RegionKind kind) {
    for (auto& r : regions_)
        if (r.kind == kind) return &r;
    return nullptr;
}

uint8_t MemoryImage::read8(uint32_t addr) const {
    const Region* r = find_region(addr);
    if (!r) throw SnapshotError("read8: unmapped address");
    return r->data[addr - r->base];
}

uint32_t MemoryImage::read32(uint32_t addr) const {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | read8(addr + uint32_t(i));
    return v;
}

void MemoryImage::write8(uint32_t addr, uint8_t v) {
    Region* r = nullptr;
    for (auto& reg : regions_)
        if (reg.contains(addr)) { r = &reg; break; }
    if (!r) throw SnapshotError("write8: unmapped address");
    r->data[addr - r->base] = v;
}

void MemoryImage::write32(uint32_t addr, uint32_t v) {
    for (int i = 0; i < 4; ++i) write8(addr + uint32_t(i), uint8_t(v >> (8 * i)));
}

uint32_t MemoryImage::mmio_half() const {
    const Region* m = region(RegionKind::Mmio);
    return m ? m->length / 2 : 0;
}

uint32_t MemoryImage::mmio_in_base() const {
    const Region* m = region(RegionKind::Mmio);
    if (!m) throw MissingRegionError("MMIO region absent");
    return m->base;
}

uint32_t MemoryImage::mmio_out_base() const {
    const Region* m = region(RegionKind::Mmio);
    if (!m) throw MissingRegionError("MMIO region absent");
    return m->base + mmio_half();
}

void MemoryImage::install_mmio_input(const std::vector<uint8_t>& bytes) {
    const Region* m = region(RegionKind::Mmio);
    if (!m) throw MissingRegionError("MMIO region absent but mmio_input present");
    if (bytes.size() > mmio_half())
        throw SnapshotError("mmio_input larger than the MMIO input window");
    for (size_t i = 0; i < bytes.size(); ++i) write8(m->base + uint32_t(i), bytes[i]);
}

std::vector<uint8_t> MemoryImage::read_mmio_out() const {
    const Region* m = region(RegionKind::Mmio);
    if (!m) return {};
    std::vector<uint8_t> out(mmio_half());
    for (size_t i = 0; i < out.size(); ++i) out[i] = read8(mmio_out_base() + uint32_t(i));
    return out;
}

bool MemoryImage::operator==(const MemoryImage& other) const {
    if (regions_.size() != other.regions_.size()) return false;
    for (size_t i = 0; i < regions_.size(); ++i) {
        const Region& a = regions_[i];
        const Region& b = other.regions_[i];
        if (a.kind != b.kind || a.base != b.base || a.length != b.length || a.data != b.data)
            return false;
    }
    return app_entry == other.app_entry && app_load_offset == other.app_load_offset &&
           initial_sp == other.initial_sp && initial_lr == other.initial_lr &&
           gate_addr == other.gate_addr && cycles_done == other.cycles_done &&
           mmio_input == other.mmio_input && legit_input == other.legit_input;
}

}  // namespace plcpatch
