#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "plcpatch/corpus.hpp"
#include "plcpatch/patch_client.hpp"
#include "plcpatch/patchgen.hpp"
#include "plcpatch/plc.hpp"
#include "plcpatch/rehost.hpp"

namespace plcpatch {

class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage(stage) {}
    std::string stage;
};

std::string localization_to_json(const LocalizationResult& loc, const Ddg* ddg_stats = nullptr);
LocalizationResult localization_from_json(const std::string& text);
std::string verification_to_json(const VerificationReport& rep);
std::string deploy_outcome_to_json(const DeployOutcome& out);

struct E2eOptions {
    std::string rules_text;                   // empty = default ruleset
    std::optional<uint32_t> bound;            // operator bound (bound_check patches)
    std::optional<size_t> candidate_index;
    std::string target_host;                  // empty = self-hosted live device
    uint16_t target_port = 0;
    uint64_t budget = 200000;
    std::filesystem::path dump_ddg;           // optional dot output
};

struct RunReport {
    std::string binary;
    bool success = false;
    std::string failure_stage;  // empty on success
    std::string failure_detail;

    std::string rule;
    std::string patch_id;
    uint32_t chosen = 0;
    uint32_t malicious_value = 0;
    size_t candidates = 0;
    uint32_t footprint = 0;

    bool verified_safe = false;
    int64_t instruction_overhead = -1;
    bool deployed = false;

    bool pre_exploit_crash_or_alert = false;  // unpatched + exploit, 1 cycle
    bool post_exploit_clean = false;          // patched + exploit, 10 cycles
    bool post_legit_equal = false;            // patched vs unpatched, 50 cycles
    uint64_t pre_steps = 0;                   // unpatched legit cycle steps
    uint64_t post_steps = 0;                  // patched legit cycle steps

    std::string to_json() const;
};

// Full chronology against one snapshot: localize -> build -> verify (abort if
// UNSAFE) -> deploy -> post-checks. The live device is either a remote patch
// server or an in-process one when target_host is empty.
RunReport end_to_end(const MemoryImage& image, const GroundTruth* gt, const E2eOptions& opts);

struct BatchSummary {
    size_t total = 0;
    size_t localized_exact = 0;  // chosen == ground-truth cell
    size_t succeeded = 0;
    std::vector<RunReport> reports;

    bool all_green() const { return total > 0 && localized_exact == total && succeeded == total; }
};

// Runs e2e over every corpus directory (snapshot.manifest + ground.truth).
BatchSummary run_batch(const std::filesystem::path& corpus_dir, const E2eOptions& opts);
BatchSummary run_batch(const std::vector<CorpusBinary>& corpus, const E2eOptions& opts);

}  // namespace plcpatch
