#include "plcpatch/pipeline.hpp"

#include <fstream>
#include <future>
#include <thread>

#include "json.hpp"
#include "plcpatch/patch_server.hpp"
#include "plcpatch/snapshot.hpp"

namespace plcpatch {

using nlohmann::json;

namespace {

json detection_json(const Detection& d) {
    return json{{"rule", d.rule},
                {"action", d.action == RuleAction::Alert ? "ALERT" : "WARN"},
                {"patch", d.patch_identifier},
                {"message", d.message},
                {"pc", d.pc},
                {"violating_address", d.violating_address},
                {"is_write", d.is_write},
                {"cycle", d.cycle},
                {"cycle_step", d.cycle_step}};
}

Detection detection_from(const json& j) {
    Detection d;
    d.rule = j.at("rule").get<std::string>();
    d.action = j.at("action").get<std::string>() == "WARN" ? RuleAction::Warn : RuleAction::Alert;
    d.patch_identifier = j.at("patch").get<std::string>();
    d.message = j.value("message", "");
    d.pc = j.at("pc").get<uint32_t>();
    d.violating_address = j.at("violating_address").get<uint32_t>();
    d.is_write = j.at("is_write").get<bool>();
    d.cycle = j.at("cycle").get<uint64_t>();
    d.cycle_step = j.at("cycle_step").get<uint64_t>();
    return d;
}

}  // namespace

std::string localization_to_json(const LocalizationResult& loc, const Ddg* ddg) {
    json j;
    j["detection"] = detection_json(loc.detection);
    j["start_instr"] = loc.start_instr;
    j["comparison_found"] = loc.comparison_found;
    j["block_start"] = loc.block_start;
    j["block_end"] = loc.block_end;
    j["candidates"] = loc.candidates;
    j["chosen"] = loc.chosen;
    j["malicious_value"] = loc.malicious_value;
    j["app_frame_base"] = loc.app_frame_base;
    j["violating_call_branch_pc"] = loc.violating_call_branch_pc;
    if (ddg) {
        j["ddg"] = json{{"nodes", ddg->nodes().size()}, {"edges", ddg->edges().size()}};
    }
    return j.dump(2);
}

LocalizationResult localization_from_json(const std::string& text) {
    json j = json::parse(text);
    LocalizationResult loc;
    loc.detection = detection_from(j.at("detection"));
    loc.start_instr = j.at("start_instr").get<uint32_t>();
    loc.comparison_found = j.at("comparison_found").get<bool>();
    loc.block_start = j.at("block_start").get<uint32_t>();
    loc.block_end = j.at("block_end").get<uint32_t>();
    loc.candidates = j.at("candidates").get<std::vector<uint32_t>>();
    loc.chosen = j.at("chosen").get<uint32_t>();
    loc.malicious_value = j.at("malicious_value").get<uint32_t>();
    loc.app_frame_base = j.at("app_frame_base").get<uint32_t>();
    loc.violating_call_branch_pc = j.at("violating_call_branch_pc").get<uint32_t>();
    return loc;
}

std::string verification_to_json(const VerificationReport& rep) {
    json checks = json::array();
    for (auto c : rep.violated) checks.push_back(patch_check_name(c));
    json warns = json::array();
    for (const auto& w : rep.warns) warns.push_back(detection_json(w));
    json j{{"verdict", rep.safe ? "SAFE" : "UNSAFE"},
           {"violated_checks", checks},
           {"steps_executed", rep.steps_executed},
           {"instruction_overhead", rep.instruction_overhead},
           {"warns", warns}};
    return j.dump(2);
}

std::string deploy_outcome_to_json(const DeployOutcome& out) {
    json steps = json::array();
    if (out.patch_written) steps.push_back("patch_written");
    if (out.table_written) steps.push_back("table_written");
    if (out.hook_written) steps.push_back("hook_written");
    json j{{"steps_completed", steps}, {"complete", out.complete()}};
    if (out.aborted_at) {
        j["aborted_at"] = int(*out.aborted_at);
        j["mismatch_detail"] = out.mismatch_detail;
    }
    return j.dump(2);
}

std::string RunReport::to_json() const {
    json j{{"binary", binary},
           {"success", success},
           {"rule", rule},
           {"patch", patch_id},
           {"chosen", chosen},
           {"malicious_value", malicious_value},
           {"candidates", candidates},
           {"footprint_bytes", footprint},
           {"verified_safe", verified_safe},
           {"instruction_overhead", instruction_overhead},
           {"deployed", deployed},
           {"pre_exploit_crash_or_alert", pre_exploit_crash_or_alert},
           {"post_exploit_clean", post_exploit_clean},
           {"post_legit_equal", post_legit_equal},
           {"pre_patch_steps", pre_steps},
           {"post_patch_steps", post_steps}};
    if (!success) {
        j["failure_stage"] = failure_stage;
        j["failure_detail"] = failure_detail;
    }
    return j.dump(2);
}

namespace {

MonitorConfig monitor_for(const MemoryImage& image, const std::vector<uint8_t>& legit,
                          const std::string& rules_text, const std::set<uint32_t>& immune) {
    MonitorConfig mon;
    mon.rules = parse_ruleset(rules_text.empty() ? default_ruleset_text() : rules_text);
    if (!legit.empty()) mon.profile = build_profile(image, legit);
    mon.immune_cells = immune;
    return mon;
}

}  // namespace

RunReport end_to_end(const MemoryImage& image, const GroundTruth* gt, const E2eOptions& opts) {
    RunReport report;
    report.binary = gt ? gt->name : "snapshot";

    auto fail = [&](const std::string& stage, const std::string& detail) {
        report.success = false;
        report.failure_stage = stage;
        report.failure_detail = detail;
        return report;
    };

    // the live device: remote, or an in-process server over the same image
    std::optional<SharedPlc> self_plc;
    std::optional<PatchServer> self_server;
    std::string host = opts.target_host;
    uint16_t port = opts.target_port;
    if (host.empty()) {
        self_plc.emplace(image);
        self_server.emplace(*self_plc);
        port = self_server->start(0);
        host = "localhost";
    }

    PatchClient client;
    try {
        client.connect(host, port);
        client.hello();
    } catch (const std::exception& e) {
        return fail("connect", e.what());
    }

    // ---- localization ----
    SimSession session = init_sim(image);
    if (!opts.rules_text.empty()) session.rules = parse_ruleset(opts.rules_text);
    session.budget = opts.budget;
    session.candidate_index =
        opts.candidate_index ? opts.candidate_index
                             : (gt ? std::optional<size_t>(gt->candidate_index) : std::nullopt);
    RunAndDetectResult det;
    try {
        det = run_and_detect(session);
    } catch (const std::exception& e) {
        return fail("localize", e.what());
    }
    if (det.verdict != RunVerdict::Detected)
        return fail("localize", det.verdict == RunVerdict::Clean ? "no vulnerability detected"
                                                                 : "scan cycle skipped");
    const LocalizationResult& loc = *det.localization;
    report.rule = loc.detection.rule;
    report.patch_id = loc.detection.patch_identifier;
    report.chosen = loc.chosen;
    report.malicious_value = loc.malicious_value;
    report.candidates = loc.candidates.size();
    if (!opts.dump_ddg.empty()) {
        std::ofstream f(opts.dump_ddg);
        f << det.ddg.to_dot();
    }

    // ---- patch generation ----
    uint32_t bound = 0;
    if (report.patch_id == "bound_check") {
        if (opts.bound) bound = *opts.bound;
        else if (gt) bound = gt->bound_limit;
        else return fail("build", "bound_check patches require an operator bound");
    }
    PatchPlan plan;
    LiveBaseInfo live;
    try {
        live = client.get_base_addr();
        plan = build_patch(loc, report.patch_id, image, live, bound);
    } catch (const std::exception& e) {
        return fail("build", e.what());
    }
    report.footprint = plan.total_bytes;

    // ---- verification (on the development image; abort when UNSAFE) ----
    std::vector<uint8_t> exploit = image.mmio_input;
    std::vector<uint8_t> legit = image.legit_input;
    PatchPlan dev_plan;
    try {
        dev_plan = build_patch(loc, report.patch_id, image, LiveBaseInfo::self(image), bound);
        auto rules = session.rules;
        VerificationReport ver = verify_patch(image, dev_plan, exploit, legit, rules, opts.budget);
        report.verified_safe = ver.safe;
        report.instruction_overhead = ver.instruction_overhead;
        if (!ver.safe) {
            std::string checks;
            for (auto c : ver.violated) checks += std::string(patch_check_name(c)) + " ";
            return fail("verify", "patch deemed UNSAFE: " + checks);
        }
    } catch (const std::exception& e) {
        return fail("verify", e.what());
    }

    // ---- deployment ----
    DeployOutcome deploy_out;
    try {
        deploy_out = client.deploy(plan);
    } catch (const std::exception& e) {
        return fail("deploy", e.what());
    }
    if (!deploy_out.complete())
        return fail("deploy", "aborted: " + deploy_out.mismatch_detail);
    report.deployed = true;

    // ---- post-checks on local copies (dev layout mirrors the live one) ----
    try {
        // unpatched + exploit: crash or alert within one cycle
        {
            MemoryImage img = image;
            MonitorConfig mon = monitor_for(image, legit, opts.rules_text, {});
            RunCyclesOptions ro;
            ro.monitor = &mon;
            ro.budget_per_cycle = opts.budget;
            auto res = run_cycles(img, 1, constant_input(exploit), ro);
            report.pre_exploit_crash_or_alert =
                !res.empty() && (res[0].crashed || !res[0].rule_alerts.empty());
        }
        // patched + exploit: ten cycles, no alerts, no crash
        {
            MemoryImage img = image;
            apply_plan(img, dev_plan);
            std::set<uint32_t> immune;
            if (dev_plan.patch_id == "table_restore") immune.insert(dev_plan.table_entry_addr);
            MonitorConfig mon = monitor_for(img, legit, opts.rules_text, immune);
            RunCyclesOptions ro;
            ro.monitor = &mon;
            ro.budget_per_cycle = opts.budget;
            auto res = run_cycles(img, 10, constant_input(exploit), ro);
            bool clean = res.size() == 10;
            for (const auto& r : res)
                if (r.crashed || !r.rule_alerts.empty()) clean = false;
            report.post_exploit_clean = clean;
        }
        // patched + legit: fifty cycles byte-identical to unpatched
        if (!legit.empty()) {
            MemoryImage plain = image;
            MemoryImage patched = image;
            apply_plan(patched, dev_plan);
            auto a = run_cycles(plain, 50, constant_input(legit));
            auto b = run_cycles(patched, 50, constant_input(legit));
            bool equal = a.size() == b.size();
            for (size_t i = 0; equal && i < a.size(); ++i)
                if (a[i].outputs != b[i].outputs || b[i].crashed) equal = false;
            report.post_legit_equal = equal;
            if (!a.empty() && !b.empty()) {
                report.pre_steps = a[0].steps;
                report.post_steps = b[0].steps;
            }
        }
    } catch (const std::exception& e) {
        return fail("post-checks", e.what());
    }

    bool footprint_ok = report.footprint == 64 || report.footprint == 56;
    report.success = report.deployed && report.verified_safe && footprint_ok &&
                     report.pre_exploit_crash_or_alert && report.post_exploit_clean &&
                     (legit.empty() || report.post_legit_equal);
    if (!report.success && report.failure_stage.empty())
        return fail("post-checks", "one or more post-deployment checks failed");
    return report;
}

BatchSummary run_batch(const std::vector<CorpusBinary>& corpus, const E2eOptions& opts) {
    // one self-hosted device per binary; sessions are independent, so the
    // batch fans out across threads and collects in order
    std::vector<std::future<RunReport>> futures;
    futures.reserve(corpus.size());
    for (const auto& bin : corpus) {
        futures.push_back(std::async(std::launch::async, [&bin, opts] {
            E2eOptions o = opts;
            o.target_host.clear();
            return end_to_end(bin.image, &bin.gt, o);
        }));
    }
    BatchSummary summary;
    for (size_t i = 0; i < corpus.size(); ++i) {
        RunReport rep = futures[i].get();
        summary.total += 1;
        if (rep.chosen == corpus[i].gt.input_cell && rep.rule == corpus[i].gt.expected_rule)
            summary.localized_exact += 1;
        if (rep.success) summary.succeeded += 1;
        summary.reports.push_back(std::move(rep));
    }
    return summary;
}

BatchSummary run_batch(const std::filesystem::path& corpus_dir, const E2eOptions& opts) {
    namespace fs = std::filesystem;
    std::vector<CorpusBinary> corpus;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(corpus_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "snapshot.manifest"))
            dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
        CorpusBinary bin;
        bin.image = load_snapshot(dir / "snapshot.manifest");
        bin.gt = load_ground_truth(dir / "ground.truth");
        corpus.push_back(std::move(bin));
    }
    return run_batch(corpus, opts);
}

}  // namespace plcpatch
