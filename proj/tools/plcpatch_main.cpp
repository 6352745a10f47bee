// plcpatch: rehost scan-cycle control binaries, localize memory-safety
// defects over the data dependence graph, and hotpatch the live device.

#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "plcpatch/corpus.hpp"
#include "plcpatch/patch_client.hpp"
#include "plcpatch/patch_server.hpp"
#include "plcpatch/pipeline.hpp"
#include "plcpatch/plc.hpp"
#include "plcpatch/snapshot.hpp"

using namespace plcpatch;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

std::vector<Rule> rules_from(const std::string& rules_path) {
    if (rules_path.empty()) return parse_ruleset(default_ruleset_text());
    return parse_ruleset(read_file(rules_path));
}

bool parse_host_port(const std::string& s, std::string& host, uint16_t& port) {
    size_t colon = s.rfind(':');
    if (colon == std::string::npos) return false;
    host = s.substr(0, colon);
    port = uint16_t(std::stoul(s.substr(colon + 1)));
    return true;
}

struct AttackSpec {
    uint64_t cycle = 0;
    uint32_t offset = 0;
    std::vector<uint8_t> bytes;
};

AttackSpec parse_attack(const std::string& s) {
    AttackSpec a;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        std::string kv =
            s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        size_t eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad --attack field: " + kv);
        std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "cycle") a.cycle = std::stoull(val);
        else if (key == "offset") a.offset = uint32_t(std::stoul(val, nullptr, 0));
        else if (key == "bytes") a.bytes = from_hex(val);
        else throw std::runtime_error("unknown --attack field: " + key);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (a.bytes.empty()) throw std::runtime_error("--attack needs bytes=<hex>");
    return a;
}

int cmd_corpus_generate(uint64_t seed, const std::string& out_dir) {
    auto corpus = generate_corpus(seed);
    write_corpus(corpus, out_dir);
    std::cout << "wrote " << corpus.size() << " binaries under " << out_dir << "\n";
    return 0;
}

int cmd_localize(const std::string& snapshot, const std::string& rules_path, int candidate,
                 const std::string& dump_ddg, const std::string& json_out) {
    SimSession session = init_sim(std::filesystem::path(snapshot));
    if (!rules_path.empty()) session.rules = rules_from(rules_path);
    if (candidate >= 0) session.candidate_index = size_t(candidate);

    RunAndDetectResult r = run_and_detect(session);
    if (!dump_ddg.empty()) write_file(dump_ddg, r.ddg.to_dot());
    if (r.verdict == RunVerdict::Clean) {
        std::cout << "CLEAN: scan cycle completed without a detection\n";
        return 2;
    }
    if (r.verdict == RunVerdict::Skipped) {
        std::cout << "SKIPPED: loader gate held the cycle back\n";
        return 3;
    }
    const LocalizationResult& loc = *r.localization;
    std::cout << "DETECTED " << loc.detection.rule << " at pc 0x" << std::hex << loc.detection.pc
              << ", violating address 0x" << loc.detection.violating_address << "\n";
    std::cout << "  start node 0x" << loc.start_instr << " block [0x" << loc.block_start << ", 0x"
              << loc.block_end << ")\n";
    std::cout << "  candidates:";
    for (size_t i = 0; i < loc.candidates.size(); ++i)
        std::cout << " [" << std::dec << i << "] 0x" << std::hex << loc.candidates[i];
    std::cout << "\n  chosen 0x" << loc.chosen << " holding value 0x" << loc.malicious_value
              << std::dec << "\n";
    if (loc.candidates.size() > 1)
        std::cout << "  (multiple candidates; check the shown value against the exploit input "
                     "or rerun with --candidate)\n";
    if (!json_out.empty()) write_file(json_out, localization_to_json(loc, &r.ddg));
    return 0;
}

int cmd_patch_build(const std::string& snapshot, const std::string& loc_path, uint32_t bound,
                    bool bound_set, const std::string& live, const std::string& out) {
    MemoryImage image = load_snapshot(snapshot);
    LocalizationResult loc = localization_from_json(read_file(loc_path));
    std::string patch_id = loc.detection.patch_identifier;
    if (patch_id == "bound_check" && !bound_set)
        throw std::runtime_error("bound_check patches require --bound");

    LiveBaseInfo info;
    if (live.empty()) {
        info = LiveBaseInfo::self(image);
    } else {
        std::string host;
        uint16_t port = 0;
        if (!parse_host_port(live, host, port)) throw std::runtime_error("bad --live host:port");
        PatchClient client;
        client.connect(host, port);
        client.hello();
        info = client.get_base_addr();
    }
    PatchPlan plan = build_patch(loc, patch_id, image, info, bound);
    auto bytes = plan.serialize();
    std::ofstream f(out, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    std::cout << "plan: " << patch_id << ", " << plan.total_bytes << " bytes total, patch at 0x"
              << std::hex << plan.patch_addr << ", slot 0x" << plan.table_slot_addr << ", hook 0x"
              << plan.hook_addr << std::dec << "\n";
    return 0;
}

PatchPlan load_plan(const std::string& path) {
    std::string raw = read_file(path);
    return PatchPlan::deserialize(std::vector<uint8_t>(raw.begin(), raw.end()));
}

int cmd_patch_verify(const std::string& snapshot, const std::string& plan_path,
                     const std::string& rules_path, const std::string& json_out) {
    MemoryImage image = load_snapshot(snapshot);
    PatchPlan plan = load_plan(plan_path);
    auto rules = rules_from(rules_path);
    VerificationReport rep = verify_patch(image, plan, image.mmio_input, image.legit_input, rules);
    std::cout << (rep.safe ? "SAFE" : "UNSAFE");
    for (auto c : rep.violated) std::cout << " " << patch_check_name(c);
    std::cout << " (steps " << rep.steps_executed << ", overhead " << rep.instruction_overhead
              << ")\n";
    if (!json_out.empty()) write_file(json_out, verification_to_json(rep));
    return rep.safe ? 0 : 4;
}

int cmd_patch_deploy(const std::string& plan_path, const std::string& target) {
    PatchPlan plan = load_plan(plan_path);
    std::string host;
    uint16_t port = 0;
    if (!parse_host_port(target, host, port)) throw std::runtime_error("bad --target host:port");
    PatchClient client;
    client.connect(host, port);
    client.hello();
    DeployOutcome out = client.deploy(plan);
    std::cout << deploy_outcome_to_json(out) << "\n";
    return out.complete() ? 0 : 5;
}

int cmd_plc_run(const std::string& snapshot, uint64_t cycles, const std::string& input_hex,
                const std::string& attack_str, bool monitor, bool closed, bool serve,
                uint16_t serve_port, const std::string& trace_out) {
    MemoryImage image = load_snapshot(snapshot);
    std::vector<uint8_t> input = input_hex.empty() ? image.mmio_input : from_hex(input_hex);

    std::optional<AttackSpec> attack;
    if (!attack_str.empty()) attack = parse_attack(attack_str);

    if (serve) {
        SharedPlc plc(image);
        PatchServer server(plc);
        uint16_t port = server.start(serve_port);
        std::cout << "patch server listening on 127.0.0.1:" << port << "\n" << std::flush;
        for (uint64_t i = 0; cycles == 0 || i < cycles; ++i) {
            std::vector<uint8_t> in = input;
            if (attack && i >= attack->cycle)
                for (size_t j = 0; j < attack->bytes.size(); ++j)
                    if (attack->offset + j < in.size()) in[attack->offset + j] = attack->bytes[j];
            auto stats = plc.run_one_cycle(i, in);
            std::cout << "cycle " << i << " steps=" << stats.steps
                      << (stats.crashed ? " CRASHED" : "") << (stats.skipped ? " SKIPPED" : "")
                      << "\n";
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        server.stop();
        return 0;
    }

    if (closed) {
        std::optional<ClosedLoopAttack> cl_attack;
        if (attack) cl_attack = ClosedLoopAttack{attack->cycle, attack->offset, attack->bytes};
        ProcessModel plant;
        auto trace = closed_loop(image, plant, cycles, input, cl_attack);
        std::ostringstream out;
        for (size_t i = 0; i < trace.distillate.size(); ++i)
            out << "cycle=" << i << " tb0=" << trace.brine_temp[i] << " wd=" << trace.distillate[i]
                << " steam=" << trace.steam_cmd[i] << " crashed=" << trace.crashed[i] << "\n";
        std::cout << out.str();
        if (!trace_out.empty()) write_file(trace_out, out.str());
        return 0;
    }

    MonitorConfig mon;
    RunCyclesOptions opts;
    if (monitor) {
        mon.rules = parse_ruleset(default_ruleset_text());
        if (!image.legit_input.empty()) mon.profile = build_profile(image, image.legit_input);
        opts.monitor = &mon;
    }
    auto source = [&](uint64_t cycle) -> std::optional<std::vector<uint8_t>> {
        std::vector<uint8_t> in = input;
        if (attack && cycle >= attack->cycle)
            for (size_t j = 0; j < attack->bytes.size(); ++j)
                if (attack->offset + j < in.size()) in[attack->offset + j] = attack->bytes[j];
        if (cycle == 0 || (attack && cycle >= attack->cycle)) return in;
        return std::nullopt;
    };
    auto results = run_cycles(image, cycles, source, opts);
    std::ostringstream trace;
    for (const auto& r : results) {
        trace << "cycle=" << r.cycle << " steps=" << r.steps << " crashed=" << r.crashed
              << " skipped=" << r.skipped << " outputs=" << to_hex(r.outputs);
        for (const auto& d : r.rule_alerts) trace << " ALERT=" << d.rule;
        trace << "\n";
    }
    std::cout << trace.str();
    if (!trace_out.empty()) write_file(trace_out, trace.str());
    return 0;
}

int cmd_e2e(const std::string& snapshot, const std::string& batch_dir,
            const std::string& rules_path, uint32_t bound, bool bound_set, int candidate,
            const std::string& target, const std::string& json_out) {
    E2eOptions opts;
    if (!rules_path.empty()) opts.rules_text = read_file(rules_path);
    if (bound_set) opts.bound = bound;
    if (candidate >= 0) opts.candidate_index = size_t(candidate);
    if (!target.empty()) {
        if (!parse_host_port(target, opts.target_host, opts.target_port))
            throw std::runtime_error("bad --target host:port");
    }

    if (!batch_dir.empty()) {
        BatchSummary summary = run_batch(std::filesystem::path(batch_dir), opts);
        nlohmann::json j;
        j["total"] = summary.total;
        j["localized_exact"] = summary.localized_exact;
        j["succeeded"] = summary.succeeded;
        j["localization_rate"] =
            summary.total ? double(summary.localized_exact) / double(summary.total) : 0.0;
        auto arr = nlohmann::json::array();
        for (const auto& r : summary.reports) arr.push_back(nlohmann::json::parse(r.to_json()));
        j["reports"] = arr;
        if (!json_out.empty()) write_file(json_out, j.dump(2));
        for (const auto& r : summary.reports)
            std::cout << (r.success ? "ok   " : "FAIL ") << r.binary << " rule=" << r.rule
                      << " footprint=" << r.footprint << "\n";
        std::cout << "localized " << summary.localized_exact << "/" << summary.total
                  << ", succeeded " << summary.succeeded << "/" << summary.total << "\n";
        return summary.all_green() ? 0 : 1;
    }

    MemoryImage image = load_snapshot(snapshot);
    GroundTruth gt;
    const GroundTruth* gtp = nullptr;
    auto truth = std::filesystem::path(snapshot).parent_path() / "ground.truth";
    if (std::filesystem::exists(truth)) {
        gt = load_ground_truth(truth);
        gtp = &gt;
    }
    RunReport rep = end_to_end(image, gtp, opts);
    if (!json_out.empty()) write_file(json_out, rep.to_json());
    std::cout << rep.to_json() << "\n";
    return rep.success ? 0 : 1;
}

int cmd_report(const std::string& in) {
    nlohmann::json j = nlohmann::json::parse(read_file(in));
    auto pr = [&](const nlohmann::json& r) {
        std::cout << (r.value("success", false) ? "ok   " : "FAIL ") << r.value("binary", "?")
                  << "  rule=" << r.value("rule", "?") << " patch=" << r.value("patch", "?")
                  << " footprint=" << r.value("footprint_bytes", 0)
                  << " overhead=" << r.value("instruction_overhead", -1) << "\n";
    };
    if (j.contains("reports")) {
        for (const auto& r : j["reports"]) pr(r);
        std::cout << "localization rate: " << j.value("localization_rate", 0.0) * 100 << "%\n";
    } else {
        pr(j);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scan-cycle control application rehosting, localization and hotpatching"};
    app.require_subcommand(1);

    auto* corpus = app.add_subcommand("corpus", "synthetic dataset operations");
    auto* cgen = corpus->add_subcommand("generate", "generate the vulnerable-binary corpus");
    uint64_t seed = 0;
    std::string out_dir;
    cgen->add_option("--seed", seed, "generator seed");
    cgen->add_option("--out", out_dir, "output directory")->required();

    auto* plc = app.add_subcommand("plc", "live device emulator");
    auto* prun = plc->add_subcommand("run", "run scan cycles");
    std::string snapshot, input_hex, attack_str, trace_out;
    uint64_t cycles = 10;
    bool monitor = false, closed = false;
    uint16_t serve_port = 0;
    prun->add_option("--snapshot", snapshot, "snapshot manifest")->required();
    prun->add_option("--cycles", cycles, "cycle count (0 = run until stopped, serving mode)");
    prun->add_option("--input", input_hex, "MMIO input bytes (hex), default from manifest");
    prun->add_option("--attack", attack_str, "attack spec: cycle=K,bytes=HEX[,offset=J]");
    prun->add_flag("--monitor", monitor, "evaluate the detection ruleset per cycle");
    prun->add_flag("--closed-loop", closed, "drive the integer plant in the loop");
    auto* serve_opt =
        prun->add_option("--serve-patch", serve_port, "serve the patch protocol (0 = ephemeral)");
    prun->add_option("--trace-out", trace_out, "write per-cycle records to a file");

    auto* loc = app.add_subcommand("localize", "detect and localize on a snapshot");
    std::string rules_path, dump_ddg, json_out;
    int candidate = -1;
    loc->add_option("--snapshot", snapshot, "snapshot manifest")->required();
    loc->add_option("--rules", rules_path, "ruleset file (default: built-in)");
    loc->add_option("--candidate", candidate, "candidate index when several qualify");
    loc->add_option("--dump-ddg", dump_ddg, "write the dependence graph as dot");
    loc->add_option("--json-out", json_out, "write the machine-readable report");

    auto* patch = app.add_subcommand("patch", "patch plan operations");
    auto* pbuild = patch->add_subcommand("build", "populate a skeleton patch");
    std::string loc_path, live, plan_out = "plan.bin", plan_path, target;
    uint32_t bound = 0;
    pbuild->add_option("--snapshot", snapshot, "development snapshot manifest")->required();
    pbuild->add_option("--localization", loc_path, "localization json")->required();
    auto* bound_opt_b = pbuild->add_option("--bound", bound, "operator bound (bound_check)");
    pbuild->add_option("--live", live, "live device host:port for base addresses");
    pbuild->add_option("--out", plan_out, "plan output path");

    auto* pverify = patch->add_subcommand("verify", "rerun the scan cycle against a plan");
    pverify->add_option("--snapshot", snapshot, "snapshot manifest")->required();
    pverify->add_option("--plan", plan_path, "plan file")->required();
    pverify->add_option("--rules", rules_path, "ruleset file");
    pverify->add_option("--json-out", json_out, "verification report path");

    auto* pdeploy = patch->add_subcommand("deploy", "three-step deployment to a live device");
    pdeploy->add_option("--plan", plan_path, "plan file")->required();
    pdeploy->add_option("--target", target, "live device host:port")->required();

    auto* e2e = app.add_subcommand("e2e", "full chronology: localize through deploy");
    std::string batch_dir;
    e2e->add_option("--snapshot", snapshot, "single snapshot manifest");
    e2e->add_option("--batch", batch_dir, "corpus directory for batch mode");
    e2e->add_option("--rules", rules_path, "ruleset file");
    auto* bound_opt_e = e2e->add_option("--bound", bound, "operator bound");
    e2e->add_option("--candidate", candidate, "candidate index");
    e2e->add_option("--target", target, "live device host:port (default: self-hosted)");
    e2e->add_option("--json-out", json_out, "report output path");

    auto* report = app.add_subcommand("report", "summarize a report json");
    std::string report_in;
    report->add_option("--in", report_in, "report file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cgen->parsed()) return cmd_corpus_generate(seed, out_dir);
        if (prun->parsed())
            return cmd_plc_run(snapshot, cycles, input_hex, attack_str, monitor, closed,
                               serve_opt->count() > 0, serve_port, trace_out);
        if (loc->parsed())
            return cmd_localize(snapshot, rules_path, candidate, dump_ddg, json_out);
        if (pbuild->parsed())
            return cmd_patch_build(snapshot, loc_path, bound, bound_opt_b->count() > 0, live,
                                   plan_out);
        if (pverify->parsed()) return cmd_patch_verify(snapshot, plan_path, rules_path, json_out);
        if (pdeploy->parsed()) return cmd_patch_deploy(plan_path, target);
        if (e2e->parsed()) {
            if (snapshot.empty() && batch_dir.empty())
                throw std::runtime_error("e2e needs --snapshot or --batch");
            return cmd_e2e(snapshot, batch_dir, rules_path, bound, bound_opt_e->count() > 0,
                           candidate, target, json_out);
        }
        if (report->parsed()) return cmd_report(report_in);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 10;
    }
    return 0;
}
