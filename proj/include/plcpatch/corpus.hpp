#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plcpatch/memory_image.hpp"

namespace plcpatch {

// Generator-side description of one synthetic control binary: its injected
// weakness and everything the pipeline is expected to reproduce.
struct GroundTruth {
    std::string name;
    std::string sector;
    std::string imported_fn;  // SysMemSet/SysMemMove/SysMemCpy/MemSet/MemCpy/BitCpy/array_index
    int cwe = 0;              // 787, 125, 78, 20
    std::string expected_rule;
    std::string patch_id;  // bound_check | table_restore
    uint32_t input_cell = 0;        // vulnerable input cell the DFS must find
    uint32_t bound_pc = 0;          // flag-setting instruction (DFS start)
    bool comparison_found = true;   // false: start falls back to the violation pc
    uint32_t block_fn_entry = 0;    // innermost app function at the violation
    uint32_t bound_limit = 0;       // operator bound for bound_check patches
    size_t candidate_index = 0;
    size_t expected_candidates = 1;
    uint32_t hook_ldr_pc = 0;       // table-load instruction the hook rewrites
    uint32_t table_cell = 0;        // CWE-78: the slot the exploit overwrites
    std::vector<uint8_t> exploit_input;
    std::vector<uint8_t> legit_input;
};

struct CorpusBinary {
    GroundTruth gt;
    MemoryImage image;  // post-initialization state: table populated, cycles_done=1
};

// Assembly source of one imported memory function (Table-style library).
std::string imported_fn_source(const std::string& name);
const std::vector<std::string>& imported_fn_names();

// Deterministic synthetic corpus: >= 20 binaries covering CWE-787/125/78/20
// over the imported-function grid, with per-binary ground truth.
std::vector<CorpusBinary> generate_corpus(uint64_t seed);

// Writes snapshots + ground-truth files under out_dir/<name>/.
void write_corpus(const std::vector<CorpusBinary>& corpus, const std::filesystem::path& out_dir);

GroundTruth load_ground_truth(const std::filesystem::path& truth_file);

// Fixed layout constants shared by generator and tests.
struct CorpusLayout {
    static constexpr uint32_t MMIO_BASE = 0xB6000000, MMIO_LEN = 0x100;
    static constexpr uint32_t APP_STACK_BASE = 0xB6100000, APP_STACK_LEN = 0x1000;
    static constexpr uint32_t RT_STACK_BASE = 0xB6101000, RT_STACK_LEN = 0x1000;
    static constexpr uint32_t RT_CODE_BASE = 0xB6200000, RT_CODE_LEN = 0x800;
    static constexpr uint32_t APP_CODE_BASE = 0xB6420010, APP_CODE_LEN = 0x1000;
    static constexpr uint32_t TABLE_BASE = 0xB6422000, TABLE_LEN = 0x800;
    static constexpr uint32_t DATA_BASE = 0xB6422800, DATA_LEN = 0x400;
    static constexpr uint32_t LOAD_OFFSET = 0x20010;
    static constexpr uint32_t END_STUB = RT_CODE_BASE + 0x7F0;  // captured lr / run end
};

}  // namespace plcpatch
