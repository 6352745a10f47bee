#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plcpatch/isa.hpp"
#include "plcpatch/rehost.hpp"

namespace plcpatch {

class PatchError : public std::runtime_error {
public:
    explicit PatchError(const std::string& what) : std::runtime_error(what) {}
};
class NoEmptySiteError : public PatchError {
public:
    using PatchError::PatchError;
};
class NoEmptySlotError : public PatchError {
public:
    using PatchError::PatchError;
};
class OffsetUnencodableError : public PatchError {
public:
    using PatchError::PatchError;
};
class RebaseFailedError : public PatchError {
public:
    using PatchError::PatchError;
};

// Per-region live base addresses of the deployed device.
struct LiveBaseInfo {
    std::map<RegionKind, uint32_t> bases;
    std::string version;

    static LiveBaseInfo self(const MemoryImage& img);  // identity (dev == live)
};

// Concrete values that fill a skeleton's placeholder slots.
struct PatchParams {
    uint32_t cell_off = 0;        // TARGET_CELL as an sp-relative offset at patch entry
    uint32_t bound_limit = 0;     // BOUND_LIMIT pool word
    uint32_t orig_callee_off = 0; // RETURN_TARGET: table offset of the intended callee
    uint32_t table_entry_off = 0; // TABLE_ENTRY_ADDR as an fp-relative offset
    uint32_t expected_word = 0;   // EXPECTED_WORD pool word
    uint32_t spill0_off = 0;      // fp-relative reserved scratch cells
    uint32_t spill1_off = 0;
};

// A parameterized patch body. bound_check carries 13 instructions plus the
// 32-bit bound limit; table_restore carries 11 instructions plus the expected
// entry word (see docs/patches.md for the listings).
struct SkeletonPatch {
    std::string id;
    size_t instruction_count = 0;
    size_t pool_words = 0;

    size_t byte_size() const { return (instruction_count + pool_words) * 4; }
    std::vector<Instruction> materialize(const PatchParams& p) const;
    std::vector<uint32_t> pool(const PatchParams& p) const;
};

const SkeletonPatch& skeleton(const std::string& patch_id);  // throws on unknown id

// Lowest word-aligned run of `patch_len` zero bytes between the application
// code and the address table (the APP_CODE gap).
uint32_t find_empty_patch_site(const MemoryImage& image, uint32_t patch_len);

// First zero 32-bit slot within the table scan window (default 0x7fe bytes of
// ldr-immediate reach). Returns (slot address, fp-relative offset).
std::pair<uint32_t, uint32_t> find_empty_table_slot(const MemoryImage& image,
                                                    uint32_t window = 0x7fe);

struct PatchPlan {
    std::string patch_id;
    std::vector<uint8_t> patch_bytes;
    uint32_t patch_addr = 0;
    uint32_t table_slot_addr = 0;
    uint32_t table_slot_value = 0;
    uint32_t hook_addr = 0;
    uint32_t hook_old_word = 0;
    uint32_t hook_new_word = 0;
    uint32_t total_bytes = 0;  // patch + table entry + hook
    // verification metadata
    uint32_t target_cell = 0;       // bound_check: the clamped live cell
    uint32_t table_entry_addr = 0;  // table_restore: the healed live cell
    uint32_t bound_limit = 0;

    std::vector<uint8_t> serialize() const;  // fixed-order little-endian
    static PatchPlan deserialize(const std::vector<uint8_t>& bytes);
};

// Populates the skeleton with concrete values: chooses the patch site and
// table slot on the development image, rewrites one table-load immediate as
// the hook, and rebases every absolute address into the live layout.
PatchPlan build_patch(const LocalizationResult& loc, const std::string& patch_id,
                      const MemoryImage& image, const LiveBaseInfo& live, uint32_t bound_limit);

enum class PatchCheck : uint8_t {
    UnboundedLoop,
    DangerousInstruction,
    OutOfRangeWrite,
    RulesetViolation,
};
const char* patch_check_name(PatchCheck c);

struct VerificationReport {
    bool safe = false;
    std::vector<PatchCheck> violated;
    uint64_t steps_executed = 0;
    int64_t instruction_overhead = -1;  // patched minus unpatched legit steps; -1 unknown
    std::vector<Detection> warns;
};

// Applies the plan to a copy of the image and reruns one scan cycle with the
// exploit input. SAFE when: no rule alert, no patch-code write outside
// APP_STACK/DATA/MMIO (plus the declared table cell for restore plans), no
// dangerous instruction in the patch body, and the budget holds.
VerificationReport verify_patch(const MemoryImage& image, const PatchPlan& plan,
                                const std::vector<uint8_t>& exploit_input,
                                const std::vector<uint8_t>& legit_input,
                                const std::vector<Rule>& rules, uint64_t budget = 200000);

// Writes the plan into an image: patch bytes, table slot, hook word.
void apply_plan(MemoryImage& image, const PatchPlan& plan);

}  // namespace plcpatch
