#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "plcpatch/ddg.hpp"
#include "plcpatch/isa.hpp"
#include "plcpatch/memory_image.hpp"
#include "plcpatch/rules.hpp"

namespace plcpatch {

class RehostError : public std::runtime_error {
public:
    explicit RehostError(const std::string& what) : std::runtime_error(what) {}
};
class BudgetExhaustedError : public RehostError {
public:
    using RehostError::RehostError;
};
class LocalizationFailedError : public RehostError {
public:
    using RehostError::RehostError;
};

// One executed instruction of a scan cycle.
struct ExecRecord {
    uint32_t pc = 0;
    Op op = Op::Nop;
    bool branched = false;   // a Branch event was emitted
    uint32_t branch_target = 0;
};

struct CycleOptions {
    uint64_t budget = 200000;
    uint64_t cycle_index = 0;
    const std::vector<Rule>* rules = nullptr;       // live boundary evaluation
    const std::set<uint32_t>* immune_cells = nullptr;
    Ddg* ddg = nullptr;                             // graph building when set
    bool stop_on_alert = true;
    bool record_exec = true;                        // keep per-step records
};

enum class CycleStatus : uint8_t { End, Alert, Budget, Fault, Skipped };

struct CycleOutcome {
    CycleStatus status = CycleStatus::End;
    std::optional<Detection> detection;
    std::vector<Detection> warns;
    uint64_t steps = 0;
    Fault fault = Fault::None;
    uint32_t fault_pc = 0;

    std::vector<ExecRecord> exec;
    std::vector<AccessSample> samples;        // mem accesses with frame attribution
    std::vector<size_t> sample_exec_index;    // sample -> index into exec
    std::vector<size_t> detection_exec_index_holder;  // filled when detection set
    std::set<uint32_t> app_entries_seen;      // dynamic app-function entries
    bool runtime_stack_written = false;
    // call branch pc of the frame sitting directly above the innermost app
    // frame at detection time (the call into the violating imported function)
    uint32_t violating_call_branch_pc = 0;
    uint32_t detection_frame_base = 0;
    uint32_t detection_fn_entry = 0;
    size_t detection_exec_index = 0;
};

// Executes one scan cycle: pc=app_entry, sp/lr from the manifest registers,
// runs until pc equals the captured lr. Honors the loader gate cell: a
// nonzero gate word reports Skipped without executing.
CycleOutcome run_scan_cycle(MemoryImage& img, const CycleOptions& opts);

// Runs one legitimate scan cycle and collects frame-relative write/read
// offsets per application function.
StackWriteProfile build_profile(const MemoryImage& image, const std::vector<uint8_t>& legit_input,
                                uint64_t budget = 200000);

// Post-run deviation pass: first write sample whose frame-relative offset is
// absent from the profile, evaluated through the rule list.
std::optional<Detection> sweep_profile_deviation(const std::vector<Rule>& rules,
                                                 const std::vector<AccessSample>& samples,
                                                 const MemoryImage& image,
                                                 const StackWriteProfile& profile,
                                                 const std::set<uint32_t>* immune_cells,
                                                 size_t* sample_index_out = nullptr);

struct SimSession {
    MemoryImage image;
    CpuState cpu;
    std::vector<Rule> rules;
    std::optional<StackWriteProfile> profile;
    uint32_t end = 0;
    uint64_t budget = 200000;
    std::optional<size_t> candidate_index;  // --candidate override
};

SimSession init_sim(const std::filesystem::path& manifest_path);
SimSession init_sim(MemoryImage image);
uint32_t calc_end_addr(const SimSession& session);

struct LocalizationResult {
    Detection detection;
    uint32_t start_instr = 0;      // comparison instruction (DFS start)
    bool comparison_found = true;  // false = fell back to detection pc
    uint32_t block_start = 0;
    uint32_t block_end = 0;
    std::vector<uint32_t> candidates;
    uint32_t chosen = 0;
    uint32_t malicious_value = 0;
    uint32_t app_frame_base = 0;          // sp of the innermost app frame
    uint32_t violating_call_branch_pc = 0;  // call into the violating callee, 0 if none
};

enum class RunVerdict : uint8_t { Detected, Clean, Skipped };

struct RunAndDetectResult {
    RunVerdict verdict = RunVerdict::Clean;
    std::optional<LocalizationResult> localization;
    Ddg ddg;
    CycleOutcome outcome;  // the exploit cycle's raw outcome
};

// Algorithm flow: run the exploit cycle under boundary rules while building
// the DDG; if clean and a profile is available, re-check recorded writes
// against it. On the first ALERT, localize: comparison start node, nearest
// app block, backward DFS, range check, candidate choice.
RunAndDetectResult run_and_detect(SimSession& session);

// Exposed pieces of the localization flow (also used by tests):
std::pair<uint32_t, bool> get_comparison_instruction(const CycleOutcome& outcome,
                                                     size_t detection_exec_index);
std::pair<uint32_t, uint32_t> get_nearest_app_block(const MemoryImage& image,
                                                    const std::set<uint32_t>& app_entries,
                                                    uint32_t fn_entry);
bool check_range(const Ddg& ddg, uint32_t addr, uint32_t block_start, uint32_t block_end);

}  // namespace plcpatch
