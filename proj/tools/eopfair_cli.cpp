// eopfair command-line front end.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "eopfair/aggregator.hpp"
#include "eopfair/domain.hpp"
#include "eopfair/eop_audit.hpp"
#include "eopfair/estimator.hpp"
#include "eopfair/json_io.hpp"
#include "eopfair/questiongen.hpp"
#include "eopfair/service/http_server.hpp"
#include "eopfair/simulator.hpp"

namespace fs = std::filesystem;
using eopfair::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw eopfair::Error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw eopfair::ValidationError(path + ": " + e.what());
  }
}

void write_output(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw eopfair::Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

eopfair::Vector parse_vector(const std::string& text) {
  eopfair::Vector v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto x = eopfair::detail::parse_number(cell);
    if (!x) throw eopfair::ValidationError("not a number: '" + cell + "'");
    v.push_back(*x);
  }
  return v;
}

struct DatasetArgs {
  std::string path;
  std::string schema;
  double count_cap = 10.0;
  bool raw_counts = false;
  int score_threshold = 5;

  void add_to(CLI::App* app, bool required, const std::string& flag = "--dataset") {
    auto* opt = app->add_option(flag, path, "Delimited dataset with a header row");
    if (required) opt->required()->check(CLI::ExistingFile);
    app->add_option("--schema", schema, "Feature schema JSON (default: recidivism schema)")->check(CLI::ExistingFile);
    app->add_option("--count-cap", count_cap, "Cap for count features")->capture_default_str();
    app->add_flag("--raw-counts", raw_counts, "Keep count features unscaled");
    app->add_option("--score-threshold", score_threshold, "Prediction = 1 iff score >= threshold")
        ->capture_default_str();
  }
  eopfair::FeatureSchema load_schema() const {
    return schema.empty() ? eopfair::compas_schema() : eopfair::service::parse_schema(read_json(schema));
  }
  eopfair::LoadOptions options() const {
    eopfair::LoadOptions o;
    o.count_cap = count_cap;
    o.raw_counts = raw_counts;
    o.score_threshold = score_threshold;
    return o;
  }
  std::vector<eopfair::Subject> load() const { return eopfair::load_dataset_file(path, load_schema(), options()); }
};

struct Record {
  eopfair::Participant participant;
  eopfair::Questionnaire questionnaire;
};

/// {"records": [{"participant": ..., "questionnaire": ...}]} or a bare array.
std::vector<Record> read_records(const std::string& path) {
  const json j = read_json(path);
  const json& arr = j.is_array() ? j : j.at("records");
  std::vector<Record> out;
  for (const auto& r : arr) {
    out.push_back({r.at("participant").get<eopfair::Participant>(), r.at("questionnaire").get<eopfair::Questionnaire>()});
  }
  return out;
}

std::vector<eopfair::PairwiseQuestion> all_questions(const eopfair::Questionnaire& q) {
  return eopfair::service::all_pairwise(q);
}

const std::vector<eopfair::Response>& responses_for(const eopfair::Participant& p, eopfair::Part part) {
  return part == eopfair::Part::Desert ? p.desert_responses : p.utility_responses;
}

// ---------------------------------------------------------------------------

void run_serve(const std::string& config_path, int port) {
  auto cfg = eopfair::service::load_service_config(config_path);
  if (port > 0) cfg.port = port;
  eopfair::service::Registry registry(cfg);
  httplib::Server server;
  eopfair::service::install_routes(server, registry);
  static httplib::Server* running = &server;
  std::signal(SIGINT, [](int) { running->stop(); });
  std::signal(SIGTERM, [](int) { running->stop(); });
  std::cerr << "eopfair: serving " << registry.size() << " stud" << (registry.size() == 1 ? "y" : "ies") << " on "
            << cfg.host << ':' << cfg.port << " (data in " << cfg.data_dir.string() << ")\n";
  if (!server.listen(cfg.host, cfg.port)) throw eopfair::Error("cannot listen on port " + std::to_string(cfg.port));
}

void run_generate(const DatasetArgs& data, eopfair::QuestionnaireConfig qc, const std::string& out) {
  qc.count_feature_max = eopfair::count_feature_max(data.options());
  const auto subjects = data.load();
  write_output(eopfair::build_questionnaire(subjects, data.load_schema(), qc), out);
}

void run_estimate(const std::string& responses, eopfair::Part part, const eopfair::SolverConfig& solver,
                  const std::string& out) {
  json fits = json::array();
  for (const auto& r : read_records(responses)) {
    const auto questions = all_questions(r.questionnaire);
    const auto rows = eopfair::build_rows(responses_for(r.participant, part), questions, part);
    json entry{{"participant_id", r.participant.participant_id}, {"part", part}};
    if (rows.empty()) {
      entry["fit"] = nullptr;
      entry["baseline"] = nullptr;
    } else {
      entry["fit"] = eopfair::estimate_weights(rows, rows.front().delta.size(), solver, part);
      entry["baseline"] = eopfair::estimate_eoo_baseline(rows, solver, std::nullopt, part);
    }
    fits.push_back(std::move(entry));
  }
  write_output({{"fits", fits}}, out);
}

/// Fit files are `estimate` outputs; a directory contributes every *.json in it.
std::map<std::string, eopfair::WeightVector> read_fits(const std::vector<std::string>& paths) {
  std::vector<std::string> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> in_dir;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".json") in_dir.push_back(e.path().string());
      }
      std::sort(in_dir.begin(), in_dir.end());
      files.insert(files.end(), in_dir.begin(), in_dir.end());
    } else {
      files.push_back(p);
    }
  }
  std::map<std::string, eopfair::WeightVector> out;
  for (const auto& f : files) {
    const json j = read_json(f);
    for (const auto& e : j.at("fits")) {
      if (e.at("fit").is_null()) continue;
      const std::string id = e.at("participant_id").get<std::string>();
      if (!out.emplace(id, e.at("fit").get<eopfair::FitResult>().weights).second) {
        throw eopfair::ValidationError("participant " + id + " appears in more than one fit");
      }
    }
  }
  return out;
}

void run_aggregate(const std::string& method, const std::vector<std::string>& fits, const std::string& responses,
                   eopfair::Part part, eopfair::HierarchicalConfig hc, const std::string& out) {
  if (method == "average") {
    if (fits.empty()) throw eopfair::ValidationError("--fits is required for the average method");
    write_output(eopfair::aggregate_average(read_fits(fits)), out);
    return;
  }
  if (responses.empty()) throw eopfair::ValidationError("--responses is required for the hierarchical method");
  std::map<std::string, std::vector<eopfair::ComparisonRow>> sets;
  for (const auto& r : read_records(responses)) {
    const auto questions = all_questions(r.questionnaire);
    auto rows = eopfair::build_rows(responses_for(r.participant, part), questions, part);
    if (!rows.empty()) sets.emplace(r.participant.participant_id, std::move(rows));
  }
  write_output(eopfair::aggregate_hierarchical(sets, hc, part), out);
}

void run_simulate(const DatasetArgs& data, eopfair::SimConfig sc, std::size_t synthetic_size, const std::string& out,
                  const std::string& csv) {
  const auto schema = data.load_schema();
  const auto subjects = data.path.empty()
                            ? eopfair::synthetic_compas(synthetic_size, sc.seed, data.count_cap, data.raw_counts)
                            : data.load();
  eopfair::Part part;
  if (sc.dim == schema.k() + 1) {
    part = eopfair::Part::Desert;
  } else if (sc.dim == schema.k() + 2) {
    part = eopfair::Part::Utility;
  } else {
    throw eopfair::ValidationError("--dim must be " + std::to_string(schema.k() + 1) + " (desert) or " +
                                   std::to_string(schema.k() + 2) + " (utility)");
  }
  const auto curve = eopfair::recovery_curve(subjects, schema, part, sc);

  std::cout << "part " << eopfair::to_string(part) << ", dim " << sc.dim << ", " << sc.n_trials << " trials\n";
  std::cout << std::setw(10) << "questions" << std::setw(14) << "mean_cosine" << std::setw(12) << "std" << '\n';
  for (const auto& p : curve.points) {
    std::cout << std::setw(10) << p.n_questions << std::fixed << std::setprecision(4) << std::setw(14)
              << p.mean_cosine << std::setw(12) << p.std_cosine << '\n';
  }
  if (!out.empty()) write_output(json{{"part", part}, {"dim", sc.dim}, {"trials", sc.n_trials}, {"curve", curve}}, out);
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw eopfair::Error("cannot write " + csv);
    f << "n_questions,mean_cosine,std_cosine\n" << std::setprecision(10);
    for (const auto& p : curve.points) f << p.n_questions << ',' << p.mean_cosine << ',' << p.std_cosine << '\n';
  }
}

/// JSON object {id: 0/1} or CSV "id,prediction".
eopfair::PolicyPredictions read_predictions(const std::string& path) {
  if (fs::path(path).extension() == ".json") return read_json(path).get<eopfair::PolicyPredictions>();
  std::ifstream in(path);
  if (!in) throw eopfair::Error("cannot open " + path);
  eopfair::PolicyPredictions out;
  std::string line;
  std::getline(in, line);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (eopfair::detail::trim(line).empty()) continue;
    const auto cells = eopfair::detail::split_record(line, ',');
    if (cells.size() < 2) throw eopfair::RecordError(row, "expected id,prediction");
    out[eopfair::detail::trim(cells[0])] = eopfair::detail::parse_binary_label(cells[1], "prediction", row);
  }
  return out;
}

bool run_check_eop(const DatasetArgs& data, const std::string& predictions, const std::string& delta,
                   const std::string& upsilon, const std::vector<std::string>& circumstance,
                   const eopfair::AuditConfig& ac, const std::string& out) {
  const auto schema = data.load_schema();
  eopfair::LoadOptions opt = data.options();
  opt.with_predictions = false;
  const auto subjects = eopfair::load_dataset_file(data.path, schema, opt);
  eopfair::CircumstanceProfile profile;
  profile.irrelevant_flags.assign(schema.k(), false);
  for (const auto& name : circumstance) {
    const auto it = std::find_if(schema.features.begin(), schema.features.end(),
                                 [&](const eopfair::Feature& f) { return f.name == name; });
    if (it == schema.features.end()) throw eopfair::ValidationError("unknown circumstance feature " + name);
    profile.irrelevant_flags[static_cast<std::size_t>(it - schema.features.begin())] = true;
  }
  const eopfair::WeightVector d(parse_vector(delta), eopfair::Part::Desert);
  const eopfair::WeightVector u(parse_vector(upsilon), eopfair::Part::Utility);
  const auto report = eopfair::check_eop(subjects, read_predictions(predictions), d, u, profile, ac);
  write_output(report, out);
  std::cerr << (report.passes ? "PASS" : "FAIL") << ": overall violation " << report.overall_violation
            << " (threshold " << ac.divergence_threshold << ")\n";
  return report.passes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness preference elicitation and equality-of-opportunity tools"};
  app.require_subcommand(1);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the survey HTTP service");
  std::string config_path;
  int port = 0;
  serve->add_option("--config", config_path, "Service config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Listen port (overrides config and EOPFAIR_PORT)");

  // generate-questions
  auto* gen = app.add_subcommand("generate-questions", "Build one participant's questionnaire");
  DatasetArgs gen_data;
  gen_data.add_to(gen, true);
  eopfair::QuestionnaireConfig qc;
  std::string gen_out;
  gen->add_option("--seed", qc.seed)->capture_default_str();
  gen->add_option("--n-desert", qc.n_desert)->capture_default_str();
  gen->add_option("--n-utility", qc.n_utility)->capture_default_str();
  gen->add_option("--max-diff", qc.max_attribute_diff, "Max attributes differing within a pair")->capture_default_str();
  gen->add_option("--attention-checks", qc.attention_checks_per_part, "Per part")->capture_default_str();
  gen->add_flag("--show-prediction", qc.show_prediction_in_desert, "Show the prediction in the desert part");
  gen->add_flag("--allow-neutral", qc.allow_neutral, "Offer a no-preference answer");
  gen->add_option("--out", gen_out, "Output file (default stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Fit per-participant weights");
  std::string est_responses, est_out, est_part = "desert";
  eopfair::SolverConfig solver;
  est->add_option("--responses", est_responses, "Response records JSON")->required()->check(CLI::ExistingFile);
  est->add_option("--part", est_part)->check(CLI::IsMember({"desert", "utility"}))->capture_default_str();
  est->add_option("--max-iterations", solver.max_iterations)->capture_default_str();
  est->add_option("--tolerance", solver.gradient_tolerance)->capture_default_str();
  est->add_option("--out", est_out, "Output file (default stdout)");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Aggregate individual weights into society weights");
  std::string agg_method = "average", agg_responses, agg_part = "desert", agg_out;
  std::vector<std::string> agg_fits;
  eopfair::HierarchicalConfig hc;
  agg->add_option("--method", agg_method)->check(CLI::IsMember({"average", "hierarchical"}))->capture_default_str();
  agg->add_option("--fits", agg_fits, "estimate outputs (files or directories)")->check(CLI::ExistingPath);
  agg->add_option("--responses", agg_responses, "Response records (hierarchical)")->check(CLI::ExistingFile);
  agg->add_option("--part", agg_part)->check(CLI::IsMember({"desert", "utility"}))->capture_default_str();
  agg->add_option("--lambda", hc.lambda, "Coupling radius")->check(CLI::NonNegativeNumber)->capture_default_str();
  agg->add_option("--outer-iterations", hc.outer_iterations)->capture_default_str();
  agg->add_option("--out", agg_out, "Output file (default stdout)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Recovery curve of the estimator on simulated participants");
  DatasetArgs sim_data;
  sim_data.add_to(sim, false);
  eopfair::SimConfig sc;
  std::size_t synthetic_size = 5000;
  std::string sim_out, sim_csv;
  sim->add_option("--dim", sc.dim, "6 = desert, 7 = utility for the default schema")->capture_default_str();
  sim->add_option("--trials", sc.n_trials)->capture_default_str();
  sim->add_option("--counts", sc.question_counts, "Question counts")->delimiter(',');
  sim->add_option("--seed", sc.seed)->capture_default_str();
  sim->add_option("--threshold", sc.confidence_threshold, "Confidence threshold")->capture_default_str();
  sim->add_option("--synthetic-size", synthetic_size, "Synthetic population size without --dataset")
      ->capture_default_str();
  sim->add_option("--out", sim_out, "JSON output file");
  sim->add_option("--csv", sim_csv, "CSV output file");

  // check-eop
  auto* eop = app.add_subcommand("check-eop", "Equality-of-opportunity audit of a policy");
  DatasetArgs eop_data;
  eop_data.add_to(eop, true, "--subjects,--dataset");
  std::string predictions, delta, upsilon, eop_out;
  std::vector<std::string> circumstance;
  eopfair::AuditConfig ac;
  eop->add_option("--predictions", predictions, "Policy predictions (JSON map or id,prediction CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  eop->add_option("--delta", delta, "Desert weights, comma separated")->required();
  eop->add_option("--upsilon", upsilon, "Utility weights, comma separated")->required();
  eop->add_option("--circumstance", circumstance, "Circumstance feature names")->delimiter(',')->required();
  eop->add_option("--bins", ac.n_desert_bins)->capture_default_str();
  eop->add_option("--threshold", ac.divergence_threshold)->capture_default_str();
  eop->add_option("--min-cell", ac.min_cell_size)->capture_default_str();
  eop->add_option("--out", eop_out, "Output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve) {
      run_serve(config_path, port);
    } else if (*gen) {
      run_generate(gen_data, qc, gen_out);
    } else if (*est) {
      solver.validate();
      run_estimate(est_responses, eopfair::parse_part(est_part), solver, est_out);
    } else if (*agg) {
      hc.validate();
      run_aggregate(agg_method, agg_fits, agg_responses, eopfair::parse_part(agg_part), hc, agg_out);
    } else if (*sim) {
      run_simulate(sim_data, sc, synthetic_size, sim_out, sim_csv);
    } else if (*eop) {
      // Exit status 2 flags a failed audit.
      return run_check_eop(eop_data, predictions, delta, upsilon, circumstance, ac, eop_out) ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
