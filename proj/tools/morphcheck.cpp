// morphcheck: command-line front end for campaigns, reports, triage and the
// MR catalog.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "morph/catalog.hpp"
#include "morph/datasets.hpp"
#include "morph/error.hpp"
#include "morph/report.hpp"
#include "morph/runner.hpp"
#include "morph/util.hpp"

namespace fs = std::filesystem;
using namespace morph;

namespace {

runner::RunOptions cli_options(bool quiet) {
    runner::RunOptions o;
    if (!quiet) o.log = [](const std::string& msg) { std::cerr << "[morphcheck] " << msg << "\n"; };
    return o;
}

void print_summary(const RunArtifact& a) {
    auto m = report::compute_metrics(a);
    std::printf("%-24s %8s %8s %8s %10s\n", "model", "groups", "viol", "lambda", "discarded");
    for (const auto& [model, c] : m.by_model) {
        std::printf("%-24s %8ld %8ld %8.4f %10ld\n", model.c_str(), c.groups, c.violations, c.lambda(), c.discarded);
    }
    std::printf("run: %s (%s)\n", a.dir.string().c_str(), a.complete ? "complete" : "partial");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metamorphic testing harness for LLMs on NLP tasks"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

    // run
    auto* run = app.add_subcommand("run", "Run a campaign from a config file");
    std::string config_path, out_dir;
    run->add_option("--config", config_path, "Campaign config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Run directory (default: runs/<config name>)");

    // resume
    auto* resume = app.add_subcommand("resume", "Continue an interrupted run");
    std::string run_dir;
    resume->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    // flakiness
    auto* flaky = app.add_subcommand("flakiness", "Re-run violated groups k more times");
    int k = 9;
    flaky->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    flaky->add_option("--k", k, "Additional runs per violated group")->check(CLI::PositiveNumber);

    // report
    auto* rep = app.add_subcommand("report", "Export metrics and labels");
    std::string format = "csv", report_out;
    rep->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    rep->add_option("--out", report_out, "Output directory (default: <run>/report)");

    // triage
    auto* triage = app.add_subcommand("triage", "Serve the triage API for a run");
    std::string bind = "127.0.0.1:8080", ui_dir;
    std::size_t per_cell = 0;
    std::uint64_t sample_seed = 0;
    triage->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
    triage->add_option("--bind", bind, "host:port to listen on");
    triage->add_option("--sample-per-cell", per_cell, "Violations sampled per (model, task, MR); 0 = all");
    triage->add_option("--seed", sample_seed, "Sampling seed");
    triage->add_option("--ui", ui_dir, "Directory of static UI files")->check(CLI::ExistingDirectory);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert a public dataset file to canonical JSONL");
    std::string task_name, in_format, in_path, out_path;
    std::uint64_t ingest_seed = 0;
    ingest->add_option("--task", task_name, "QAc | NLI | SA | RE")->required();
    ingest->add_option("--format", in_format, "squad2-json | snli-jsonl | sst2-tsv | redocred-json")->required();
    ingest->add_option("--input", in_path, "Dataset file")->required()->check(CLI::ExistingFile);
    ingest->add_option("--output", out_path, "Canonical JSONL to write")->required();
    ingest->add_option("--seed", ingest_seed, "Seed for multi-relation documents");

    // catalog
    auto* cat = app.add_subcommand("catalog", "Inspect the MR catalog");
    cat->require_subcommand(1);
    auto* cat_list = cat->add_subcommand("list", "List catalogued MRs");
    bool only_exec = false;
    cat_list->add_flag("--executable", only_exec, "Only MRs with an implementation");
    auto* cat_show = cat->add_subcommand("show", "Show one MR");
    int show_id = 0;
    cat_show->add_option("id", show_id, "MR id")->required();
    auto* cat_check = cat->add_subcommand("check", "Verify catalog bindings against the bundled prompts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            auto cfg = runner::CampaignConfig::load(config_path);
            if (out_dir.empty()) out_dir = (fs::path("runs") / fs::path(config_path).stem()).string();
            print_summary(runner::run_campaign(cfg, out_dir, cli_options(quiet)));
        } else if (*resume) {
            print_summary(runner::resume_campaign(run_dir, cli_options(quiet)));
        } else if (*flaky) {
            auto r = runner::rerun_failures(run_dir, k, cli_options(quiet));
            auto fr = r.fractions();
            std::printf("%-10s %8s %10s\n", "failures", "groups", "fraction");
            for (std::size_t i = 0; i < r.histogram.size(); ++i) {
                std::printf("%4zu/%-5d %8ld %10.4f\n", i + 1, r.runs(), r.histogram[i], fr[i]);
            }
            std::printf("written: %s\n", (fs::path(run_dir) / artifact::kFlakinessFile).string().c_str());
        } else if (*rep) {
            auto a = RunArtifact::load(run_dir);
            fs::path out = report_out.empty() ? fs::path(run_dir) / "report" : fs::path(report_out);
            for (const auto& p : report::export_report(a, report::parse_export_format(format), out)) {
                std::printf("%s\n", p.string().c_str());
            }
        } else if (*triage) {
            auto a = RunArtifact::load(run_dir);
            std::vector<report::ViolationRef> queue;
            if (per_cell > 0) queue = report::sample_for_triage(a, per_cell, sample_seed);
            auto svc = std::make_shared<report::TriageService>(std::move(a), std::move(queue));
            std::optional<fs::path> ui;
            if (!ui_dir.empty()) ui = ui_dir;
            report::TriageServer server(svc, ui);
            int port = server.start(bind);
            std::printf("triage API on port %d, %zu violations queued\n", port, svc->queue().size());
            std::fflush(stdout);
            server.wait();
        } else if (*ingest) {
            auto task = parse_task_kind(task_name);
            datasets::LoadOptions opts;
            opts.seed = ingest_seed;
            auto fmt = datasets::parse_format(in_format);
            if (fmt == datasets::Format::RedocredJson) {
                opts.relation_names =
                    datasets::load_relation_names(catalog::default_data_dir() / "resources" / "redocred_relations.json");
            }
            auto r = datasets::load_dataset(task, in_path, fmt, opts);
            datasets::write_canonical(out_path, task, r.instances);
            std::printf("%zu instances written, %zu of %zu rows skipped\n", r.instances.size(), r.skipped, r.raw_rows);
            for (const auto& why : r.skip_reasons) std::printf("  skipped: %s\n", why.c_str());
        } else if (*cat) {
            const auto& c = catalog::Catalog::builtin();
            if (*cat_list) {
                for (const auto& e : c.entries()) {
                    if (only_exec && !e.executable) continue;
                    std::printf("%3d %s %-40s -> %s\n", e.id, e.executable ? "*" : " ", e.input_relation.c_str(),
                                e.output_relation.c_str());
                }
            } else if (*cat_show) {
                const auto& e = c.lookup(show_id);
                json j{{"id", e.id},
                       {"tasks", e.task_tags},
                       {"input_relation", e.input_relation},
                       {"output_relation", e.output_relation},
                       {"source", e.source_ref},
                       {"executable", e.executable}};
                json app_j = json::object();
                for (const auto& [t, r] : e.applicable) {
                    json variants = json::array();
                    for (const auto& v : c.expand_variants(e.id, t)) variants.push_back(v.tag());
                    app_j[std::string(to_string(t))] = {{"relation", to_string(r)}, {"variants", variants}};
                }
                j["applicable"] = app_j;
                std::printf("%s\n", j.dump(2).c_str());
            } else if (*cat_check) {
                auto lib = llmx::PromptLibrary::load(catalog::default_data_dir() / "prompts" / "transforms.json");
                auto problems = c.self_check([&](const std::string& id) { return lib.contains(id); });
                for (const auto& p : problems) std::printf("%s\n", p.c_str());
                std::printf("%zu executable MRs, %zu applicable (MR, task) pairs, %zu problems\n",
                            c.executable_ids().size(), c.applicable_pairs().size(), problems.size());
                return problems.empty() ? 0 : 1;
            }
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "morphcheck: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "morphcheck: unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
