// Operator entry point. Subcommands wire the annotation pipeline end to
// end: validation, goal generation, alignment, common-ground inference,
// experiment runs, report assembly, and dataset import.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 endpoint error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cgtrack/experiments.hpp"
#include "cgtrack/goalgen.hpp"
#include "cgtrack/importer.hpp"

using namespace cgtrack;

namespace {

constexpr const char* kCompletionsPath = "/v1/chat/completions";

struct CliOptions {
  PipelineOptions pipeline;
  bool delta = false;
  bool skip_structure_truth = false;
  std::string model_config_path;
  std::string mock_path;
  std::string out;
  unsigned jobs = 1;
};

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::UsageError:
      return 1;
    case Errc::Timeout:
    case Errc::TransportError:
    case Errc::EndpointRefusal:
      return 3;
    default:
      return 2;
  }
}

// Everything that can change a run's numbers, in one stable string. The
// hash of this lands in every report.
std::string config_fingerprint(int exp, const CliOptions& o,
                               const ModelConfig* mc) {
  nlohmann::json j;
  j["delta"] = o.delta;
  j["emblem_window"] = o.pipeline.align.emblem_window;
  j["experiment"] = exp;
  j["ground_window"] = o.pipeline.align.ground_window;
  j["mock"] = o.mock_path.empty()
                  ? ""
                  : std::filesystem::path(o.mock_path).filename().string();
  j["model"] = mc ? model_config_to_json(*mc) : nlohmann::json();
  j["move_fuse_window"] = o.pipeline.extract.move_fuse_window;
  j["skip_structure_truth"] = o.skip_structure_truth;
  j["window_after"] = o.pipeline.align.window_after;
  j["window_before"] = o.pipeline.align.window_before;
  return j.dump();
}

void print_warnings(const std::vector<Warning>& warnings) {
  for (const auto& w : warnings) {
    std::printf("  warning %s: %s\n", w.kind.c_str(), w.message.c_str());
  }
}

int cmd_validate(const std::vector<std::string>& groups, const CliOptions& o) {
  for (const auto& dir : groups) {
    GroupData g = load_group(dir, o.pipeline);
    std::printf("%s: %zu events, %zu grounded, %zu turns, %zu records, %zu warnings\n",
                g.name.c_str(), g.timeline.size(), g.cg_timeline.size(),
                g.turns.size(), g.records.size(), g.warnings.size());
    print_warnings(g.warnings);
  }
  return 0;
}

int cmd_generate(unsigned seed, const CliOptions& o) {
  if (o.out.empty())
    throw Error(Errc::UsageError, "generate needs --out DIR");
  const StructureState goal = generate_goal(static_cast<uint32_t>(seed));
  write_goal_package(o.out, goal, static_cast<uint32_t>(seed));
  std::printf("wrote goal package for seed %u to %s\n", seed, o.out.c_str());
  return 0;
}

int cmd_align(const std::string& group, const CliOptions& o) {
  GroupData g = load_group(group, o.pipeline);
  std::vector<nlohmann::json> rows;
  rows.reserve(g.timeline.size());
  for (const auto& ev : g.timeline) rows.push_back(aligned_event_to_json(ev));
  if (o.out.empty()) {
    for (const auto& r : rows) std::printf("%s\n", r.dump().c_str());
  } else {
    write_jsonl(o.out, "aligned", rows);
    std::printf("%s: %zu aligned events -> %s\n", g.name.c_str(), rows.size(),
                o.out.c_str());
  }
  print_warnings(g.warnings);
  return 0;
}

int cmd_cgc(const std::string& group, const CliOptions& o) {
  GroupData g = load_group(group, o.pipeline);
  size_t formed = 0, expanded = 0, shrunk = 0, deleted = 0;
  for (const auto& r : g.records) {
    if (r.kind == CGKind::Formed) ++formed;
    if (r.kind == CGKind::Expanded) ++expanded;
    if (r.kind == CGKind::Shrunk) ++shrunk;
    if (r.kind == CGKind::Deleted) ++deleted;
  }
  std::printf("%s: %zu records (%zu formed, %zu expanded, %zu shrunk, %zu deleted), %zu turns\n",
              g.name.c_str(), g.records.size(), formed, expanded, shrunk,
              deleted, g.turns.size());
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    std::vector<nlohmann::json> record_rows, turn_rows;
    for (const auto& r : g.records) record_rows.push_back(cg_record_to_json(r));
    for (const auto& t : g.turns) turn_rows.push_back(turn_to_json(t));
    const auto dir = std::filesystem::path(o.out);
    write_jsonl((dir / "cg_records.jsonl").string(), "cg_records", record_rows);
    write_jsonl((dir / "turns.jsonl").string(), "turns", turn_rows);
    std::printf("wrote %s and %s\n", (dir / "cg_records.jsonl").c_str(),
                (dir / "turns.jsonl").c_str());
  }
  print_warnings(g.warnings);
  return 0;
}

int cmd_run_exp(int exp, const std::vector<std::string>& groups,
                const CliOptions& o) {
  if (o.skip_structure_truth && exp == 1)
    throw Error(Errc::UsageError,
                "experiment 1 scores against structure truth; it is excluded "
                "by --skip-structure-truth");
  if (exp != 3 && o.mock_path.empty() && o.model_config_path.empty())
    throw Error(Errc::UsageError,
                "experiments 1, 2, and 4 need --model-config or --mock");

  std::unique_ptr<ModelConfig> mc;
  if (!o.model_config_path.empty()) {
    mc = std::make_unique<ModelConfig>(
        model_config_from_json(read_json_file(o.model_config_path)));
    mc->validate();
  }
  const std::string hash =
      fnv1a_hex(config_fingerprint(exp, o, mc.get()));

  auto run_one = [&](const std::string& dir) {
    GroupData g = load_group(dir, o.pipeline);
    QueryFn query;
    std::unique_ptr<Transport> transport;
    ModelConfig cfg = mc ? *mc : ModelConfig{};
    if (exp != 3) {
      // one transport per group: mock scripts replay from the top for
      // every group, and nothing is shared across workers
      if (!o.mock_path.empty())
        transport =
            std::make_unique<MockTransport>(MockTransport::from_file(o.mock_path));
      else
        transport = std::make_unique<HttpTransport>(
            cfg.base_url, kCompletionsPath, cfg.timeout_s, cfg.api_key_env);
      Transport* t = transport.get();
      query = [&cfg, t](const std::string& prompt) {
        return query_model(prompt, cfg, *t).text;
      };
    }
    ExperimentReport rep = run_experiment(exp, g, query, o.delta);
    rep.config_hash = hash;
    return rep;
  };

  std::vector<ExperimentReport> reports(groups.size());
  std::vector<std::exception_ptr> errors(groups.size());
  const unsigned jobs = std::max(
      1u, std::min<unsigned>(o.jobs, static_cast<unsigned>(groups.size())));
  if (jobs <= 1) {
    for (size_t i = 0; i < groups.size(); ++i) reports[i] = run_one(groups[i]);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&] {
      for (size_t i = next++; i < groups.size(); i = next++) {
        try {
          reports[i] = run_one(groups[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // report assembly stays single-threaded and in input order
  const auto out_dir =
      std::filesystem::path(o.out.empty() ? std::string(".") : o.out);
  std::filesystem::create_directories(out_dir);
  std::string csv = report_csv_header() + "\n";
  for (const auto& rep : reports) {
    const auto json_path =
        out_dir / ("exp" + std::to_string(exp) + "_" + rep.group + ".json");
    write_json_file(json_path.string(), report_to_json(rep));
    csv += report_csv_row(rep) + "\n";
    std::printf("%s exp %d: average %.3f global %.3f (%d parse failures)\n",
                rep.group.c_str(), exp, rep.average_dsc, rep.global_dsc,
                rep.parse_failures);
  }
  const auto csv_path = out_dir / ("exp" + std::to_string(exp) + "_reports.csv");
  std::ofstream csv_out(csv_path, std::ios::trunc);
  if (!csv_out) throw Error(Errc::IoError, "cannot write " + csv_path.string());
  csv_out << csv;
  std::printf("reports in %s (config %s)\n", out_dir.c_str(), hash.c_str());
  return 0;
}

int cmd_report(const std::string& in_dir, const CliOptions& o) {
  std::vector<ExperimentReport> reports;
  for (const auto& entry : std::filesystem::directory_iterator(in_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json")
      continue;
    nlohmann::json j = read_json_file(entry.path().string());
    if (!j.is_object() || !j.contains("experiment") || !j.contains("group") ||
        !j.contains("average_dsc"))
      continue;
    reports.push_back(report_from_json(j));
  }
  if (reports.empty())
    throw Error(Errc::MissingInput,
                "no experiment reports found in " + in_dir);
  std::sort(reports.begin(), reports.end(),
            [](const ExperimentReport& a, const ExperimentReport& b) {
              if (a.experiment != b.experiment)
                return a.experiment < b.experiment;
              return a.group < b.group;
            });
  std::string csv = report_csv_header() + "\n";
  for (const auto& r : reports) csv += report_csv_row(r) + "\n";
  if (o.out.empty()) {
    std::printf("%s", csv.c_str());
  } else {
    std::ofstream out(o.out, std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + o.out);
    out << csv;
    std::printf("combined %zu reports -> %s\n", reports.size(), o.out.c_str());
  }
  return 0;
}

int cmd_import(const std::string& src, const std::string& dest) {
  ImportResult result = import_group(src, dest);
  for (const auto& f : result.files)
    std::printf("%s -> %s: %zu of %zu imported, %zu skipped\n",
                f.source.c_str(), f.dest.c_str(), f.imported, f.source_rows,
                f.skipped);
  std::printf("import log: %s\n", result.log_path.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"common-ground tracking over collaborative block building"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "configuration file (key=value lines)");

  CliOptions o;
  app.add_option("--ground-window", o.pipeline.align.ground_window,
                 "seconds to look ahead when grounding descriptors")
      ->configurable(true);
  app.add_option("--window-before", o.pipeline.align.window_before,
                 "action attachment window before an utterance")
      ->configurable(true);
  app.add_option("--window-after", o.pipeline.align.window_after,
                 "action attachment window after an utterance")
      ->configurable(true);
  app.add_option("--emblem-window", o.pipeline.align.emblem_window,
                 "how far back a nod or head-shake reaches")
      ->configurable(true);
  app.add_option("--tau-move,--move-fuse-window",
                 o.pipeline.extract.move_fuse_window,
                 "remove+put of one block within this window is a move")
      ->configurable(true);
  app.add_option("--model-config", o.model_config_path,
                 "model endpoint configuration (JSON)")
      ->configurable(true);
  app.add_option("--mock", o.mock_path,
                 "scripted responses (JSONL) instead of a live endpoint")
      ->configurable(true);
  app.add_option("--out", o.out, "output file or directory")
      ->configurable(true);
  app.add_flag("--delta", o.delta, "score per-turn changes instead of states")
      ->configurable(true);
  app.add_flag("--skip-structure-truth", o.skip_structure_truth,
               "exclude scoring against replayed structure (experiments 2-4 only)")
      ->configurable(true);
  app.add_option("--jobs", o.jobs, "parallel group workers")
      ->configurable(true);

  auto* validate = app.add_subcommand("validate", "parse and replay a group");
  std::vector<std::string> validate_groups;
  validate->add_option("--group", validate_groups, "group directory")
      ->required()
      ->expected(-1);

  auto* generate = app.add_subcommand("generate", "write a goal package");
  unsigned seed = 0;
  generate->add_option("--seed", seed, "generator seed")->required();

  auto* align = app.add_subcommand("align", "write the aligned timeline");
  std::string align_group_dir;
  align->add_option("--group", align_group_dir, "group directory")->required();

  auto* cgc = app.add_subcommand("cgc", "infer common ground and turns");
  std::string cgc_group_dir;
  cgc->add_option("--group", cgc_group_dir, "group directory")->required();

  auto* run_exp = app.add_subcommand("run-exp", "run an experiment over groups");
  int exp = 0;
  std::vector<std::string> exp_groups;
  run_exp->add_option("exp", exp, "experiment number")
      ->required()
      ->check(CLI::Range(1, 4));
  run_exp->add_option("--group", exp_groups, "group directory")
      ->required()
      ->expected(-1);

  auto* report = app.add_subcommand("report", "combine experiment reports");
  std::string report_in;
  report->add_option("--in", report_in, "directory of report JSON files")
      ->required();

  auto* import = app.add_subcommand("import", "map a released group onto canonical files");
  std::string import_src, import_dest;
  import->add_option("--src", import_src, "released group directory")->required();
  import->add_option("--dest", import_dest, "canonical output directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // -h and friends succeed, bad usage is 1
  }

  if (app.got_subcommand(validate)) return cmd_validate(validate_groups, o);
  if (app.got_subcommand(generate)) return cmd_generate(seed, o);
  if (app.got_subcommand(align)) return cmd_align(align_group_dir, o);
  if (app.got_subcommand(cgc)) return cmd_cgc(cgc_group_dir, o);
  if (app.got_subcommand(run_exp)) return cmd_run_exp(exp, exp_groups, o);
  if (app.got_subcommand(report)) return cmd_report(report_in, o);
  if (app.got_subcommand(import)) return cmd_import(import_src, import_dest);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "cgtrack: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cgtrack: %s\n", e.what());
    return 2;
  }
}
