#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "paraug/paraug.hpp"

namespace paraug::cli {

struct Streams {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
};

namespace detail {

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  const auto p = std::filesystem::path(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  csv::write_atomic(p, content);
}

inline std::vector<std::string> exclusion(bool no_exclude, const std::vector<std::string>& tags) {
  if (no_exclude) return {};
  return tags.empty() ? AttributeSchema{}.excluded_tags : tags;
}

inline std::string kind_of(const std::exception& e) {
  if (dynamic_cast<const ServiceError*>(&e)) return "service";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  return "error";
}

// Probability or 0/1 prediction file: id column plus one column per schema attribute.
inline Matrix<double> load_predictions(const std::filesystem::path& path, const DatasetManifest& truth,
                                       std::vector<std::size_t>& rows_out) {
  auto lines = csv::read_lines(path);
  if (lines.empty()) throw ParseError("empty predictions file " + path.string());
  csv::Header h(csv::split(lines[0]));
  const auto iid = h.index("id");
  std::vector<std::size_t> col(truth.schema.size());
  for (std::size_t m = 0; m < col.size(); ++m) col[m] = h.index(truth.schema.names[m]);
  std::map<std::string, std::size_t, std::less<>> by_id;
  for (std::size_t r = 0; r < truth.records.size(); ++r) by_id[truth.records[r].id] = r;
  Matrix<double> p(lines.size() - 1, truth.schema.size());
  std::size_t n = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto f = csv::split(lines[i]);
    if (f.size() != h.size()) throw ParseError(path.string() + " line " + std::to_string(i + 1) + ": wrong field count");
    auto it = by_id.find(f[iid]);
    if (it == by_id.end()) throw ValidationError("prediction for unknown record '" + f[iid] + "'");
    rows_out.push_back(it->second);
    for (std::size_t m = 0; m < col.size(); ++m) p(n, m) = csv::parse_double(f[col[m]], truth.schema.names[m]);
    ++n;
  }
  Matrix<double> out(n, truth.schema.size());
  std::copy(p.data().begin(), p.data().begin() + std::ptrdiff_t(n * truth.schema.size()), out.data().begin());
  return out;
}

}  // namespace detail

inline int run(int argc, const char* const* argv, Streams io = {}) {
  CLI::App app{"Weak-attribute analysis and synthetic augmentation pipeline for pedestrian attribute datasets"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  std::string config_path;
  app.add_option("--seed", seed, "initial seed");
  app.add_option("--config", config_path, "pipeline config (JSON)")->check(CLI::ExistingFile);

  // score
  auto* score = app.add_subcommand("score", "score attributes of one dataset");
  std::string s_metrics, s_train, s_test, s_manifest, s_out, s_ranking;
  std::size_t s_k = 10;
  bool s_no_ex = false;
  std::vector<std::string> s_tags;
  score->add_option("--metrics", s_metrics, "scorer input CSV (attribute,train_f1,test_f1[,pos_train,total_train])");
  score->add_option("--train-metrics", s_train, "metrics report of the train split");
  score->add_option("--test-metrics", s_test, "metrics report of the test split");
  score->add_option("--manifest", s_manifest, "dataset manifest providing positive and total train counts");
  score->add_option("--out", s_out, "scores CSV (default stdout)");
  score->add_option("--ranking", s_ranking, "ranking CSV");
  score->add_option("-k,--top", s_k, "ranking length");
  score->add_flag("--no-exclude", s_no_ex, "keep action/other attributes in the ranking");
  score->add_option("--exclude", s_tags, "exclusion tags");

  // rank
  auto* rank = app.add_subcommand("rank", "rank several datasets and aggregate appearances");
  std::vector<std::string> r_inputs;
  std::size_t r_k = 20;
  bool r_no_ex = false;
  std::vector<std::string> r_tags;
  std::string r_out;
  rank->add_option("--input", r_inputs, "NAME=scorer-input.csv, repeatable")->required();
  rank->add_option("-k,--top", r_k, "top-k per dataset");
  rank->add_flag("--no-exclude", r_no_ex, "rank every attribute");
  rank->add_option("--exclude", r_tags, "exclusion tags");
  rank->add_option("--out", r_out, "aggregate CSV (default stdout)");

  // prompts
  auto* prompts = app.add_subcommand("prompts", "compile prompts as JSON lines");
  std::string p_target, p_wild, p_out;
  std::size_t p_n = 1;
  std::uint64_t p_batch = 1;
  prompts->add_option("--target", p_target, "target attribute")->required();
  prompts->add_option("--n", p_n, "batch size");
  prompts->add_option("--batch-number", p_batch, "1-based batch number");
  prompts->add_option("--wildcards", p_wild, "wildcard table");
  prompts->add_option("--out", p_out, "JSON-lines output (default stdout)");

  // generate
  auto* gen = app.add_subcommand("generate", "run a generation batch");
  std::string g_target, g_manifest, g_out, g_wild;
  unsigned g_pct = 100;
  std::optional<std::size_t> g_base, g_stop;
  gen->add_option("--target", g_target, "target attribute")->required();
  gen->add_option("--pct", g_pct, "augmentation percentage");
  gen->add_option("--manifest", g_manifest, "manifest giving the base positive count");
  gen->add_option("--base-count", g_base, "base positive count (instead of --manifest)");
  gen->add_option("--out-dir", g_out, "batch directory (default <batch_root>/<batch id>)");
  gen->add_option("--wildcards", g_wild, "wildcard table");
  gen->add_option("--stop-after", g_stop, "run at most this many jobs");

  // degrade
  auto* deg = app.add_subcommand("degrade", "degrade every PNG in a directory");
  std::string d_in, d_out, d_params;
  unsigned d_threads = 1;
  deg->add_option("--in", d_in, "input directory")->required();
  deg->add_option("--out", d_out, "output directory")->required();
  deg->add_option("--params", d_params, "degrade params JSON");
  deg->add_option("--threads", d_threads, "worker threads per image");

  // review-serve
  auto* serve = app.add_subcommand("review-serve", "serve the review API");
  std::string v_dir, v_static, v_host = "127.0.0.1";
  int v_port = 8080;
  serve->add_option("--batch-dir", v_dir, "directory holding batch directories")->required();
  serve->add_option("--static-dir", v_static, "UI bundle directory");
  serve->add_option("--port", v_port, "listen port (0 picks one)");
  serve->add_option("--host", v_host, "listen address");

  // merge
  auto* merge = app.add_subcommand("merge", "merge accepted synthetic images into a manifest");
  std::string m_manifest, m_batch, m_disc, m_out;
  merge->add_option("--manifest", m_manifest, "base manifest")->required();
  merge->add_option("--batch", m_batch, "batch directory")->required();
  merge->add_option("--discards", m_disc, "discard list JSON (default: none rejected)");
  merge->add_option("--out", m_out, "merged manifest")->required();

  // emit-weights
  auto* ew = app.add_subcommand("emit-weights", "export targets and loss weights");
  std::string w_manifest, w_out;
  std::optional<double> w_aug;
  ew->add_option("--manifest", w_manifest, "manifest")->required();
  ew->add_option("--weight-augmented", w_aug, "weight of prompt-implied labels");
  ew->add_option("--out", w_out, "CSV output (default stdout)");

  // metrics
  auto* met = app.add_subcommand("metrics", "metrics report from predictions");
  std::string t_preds, t_manifest, t_out, t_split = "test";
  double t_thr = 0.5;
  met->add_option("--preds", t_preds, "predictions CSV (id + attribute columns)")->required();
  met->add_option("--manifest", t_manifest, "ground-truth manifest")->required();
  met->add_option("--split", t_split, "split the predictions cover")->check(CLI::IsMember({"train", "test"}));
  met->add_option("--threshold", t_thr, "binarization threshold");
  met->add_option("--out", t_out, "report CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, io.out, io.err);
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (seed) cfg.initial_seed = *seed;
    auto wildcards = [&](const std::string& flag) {
      const std::string p = !flag.empty() ? flag : !cfg.wildcards.empty() ? cfg.wildcards : default_wildcards_path().string();
      return WildcardTable::load(p);
    };

    if (*score) {
      std::vector<ScorerInputRow> rows;
      std::optional<DatasetManifest> manifest;
      if (!s_manifest.empty()) manifest = load_manifest(s_manifest);
      if (!s_metrics.empty()) {
        rows = load_scorer_input(s_metrics);
        if (manifest) attach_counts(rows, *manifest);
        else
          for (const auto& r : rows)
            if (r.total_train == 0) throw ValidationError("scorer input lacks counts; pass --manifest");
      } else {
        if (s_train.empty() || s_test.empty() || !manifest)
          throw ValidationError("score needs --metrics, or --train-metrics with --test-metrics and --manifest");
        rows = scorer_input_from_reports(load_metrics_report(s_train), load_metrics_report(s_test), *manifest);
      }
      const auto scores = score_all(rows, cfg.thresholds);
      detail::emit(s_out, format_scores(scores), io.out);
      if (!s_ranking.empty()) {
        const auto rep = rank_attributes(scores, detail::exclusion(s_no_ex, s_tags), s_k);
        detail::emit(s_ranking, format_ranking(rep), io.out);
      }
      return 0;
    }

    if (*rank) {
      std::vector<RankingReport> reps;
      std::string rankings;
      for (const auto& in : r_inputs) {
        const auto eq = in.find('=');
        if (eq == std::string::npos) throw ValidationError("--input expects NAME=PATH, got '" + in + "'");
        const auto name = in.substr(0, eq);
        const auto scores = score_all(load_scorer_input(in.substr(eq + 1)), cfg.thresholds);
        reps.push_back(rank_attributes(scores, detail::exclusion(r_no_ex, r_tags), r_k, name));
      }
      std::string out = "attribute,count\n";
      for (const auto& a : aggregate_cross_dataset(reps, r_k)) out += csv::escape(a.attribute) + "," + std::to_string(a.count) + "\n";
      detail::emit(r_out, out, io.out);
      return 0;
    }

    if (*prompts) {
      const auto table = wildcards(p_wild);
      PromptTemplate tpl;
      tpl.validate(table);
      if (p_n == 0) throw ValidationError("--n must be at least 1");
      std::string out;
      for (const auto& s : batch_prompts(tpl, table, p_target, {cfg.initial_seed, p_n, p_batch})) out += to_json_line(s) + "\n";
      detail::emit(p_out, out, io.out);
      return 0;
    }

    if (*gen) {
      std::size_t base = 0;
      if (g_base) base = *g_base;
      else {
        const std::string mp = !g_manifest.empty() ? g_manifest
                               : cfg.datasets.size() == 1 ? cfg.datasets.begin()->second
                                                          : std::string{};
        if (mp.empty()) throw ValidationError("generate needs --manifest or --base-count");
        const auto m = load_manifest(mp);
        base = split_stats(m).per_attribute_positive_train[m.schema.index_of(g_target)];
      }
      const auto plan = plan_augmentation(base, g_target, g_pct, cfg.batch_size, cfg.oversample_factor, cfg.initial_seed);
      const auto dir = g_out.empty() ? std::filesystem::path(cfg.batch_root) / plan.batch_id : std::filesystem::path(g_out);
      auto diffusion = make_diffusion(cfg.services.diffusion);
      auto detector = make_detector(cfg.services.detector);
      BatchOptions opt;
      opt.parallelism = cfg.parallelism;
      opt.retry = cfg.retry();
      opt.job = cfg.job;
      opt.stop_after = g_stop;
      const auto ledger = run_generation_batch(plan, PromptTemplate{}, wildcards(g_wild), *diffusion, *detector, cfg.degrade,
                                               dir, opt);
      Json summary{{"batch", plan.batch_id},
                   {"dir", dir.string()},
                   {"n_images", plan.n_images},
                   {"candidates", plan.candidates()},
                   {"executed", ledger.executed},
                   {"pending_review", ledger.indices_with(JobStatus::pending_review).size()},
                   {"rejected_by_detector", ledger.indices_with(JobStatus::rejected_by_detector).size()},
                   {"failed", ledger.indices_with(JobStatus::failed).size()}};
      io.out << summary.dump() << "\n";
      return ledger.indices_with(JobStatus::failed).empty() ? 0 : 3;
    }

    if (*deg) {
      DegradeParams p = cfg.degrade;
      if (!d_params.empty()) from_json(read_json_file(d_params), p, "");
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(d_in))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      std::filesystem::create_directories(d_out);
      const auto base_seed = seed.value_or(p.noise_seed);
      for (std::size_t i = 0; i < files.size(); ++i) {
        auto q = p;
        q.noise_seed = base_seed + i;
        save_png(degrade_chain(load_png(files[i]), q, d_threads), std::filesystem::path(d_out) / files[i].filename());
      }
      io.out << Json{{"degraded", files.size()}}.dump() << "\n";
      return 0;
    }

    if (*serve) {
      ReviewService svc(v_dir, v_static);
      ReviewHttpServer http(svc);
      int port = v_port;
      if (port == 0) port = http.bind_any(v_host);
      else if (!http.bind(v_host, port)) port = -1;
      if (port < 0) throw IoError("cannot bind " + v_host + ":" + std::to_string(v_port));
      io.out << Json{{"listening", v_host + ":" + std::to_string(port)}}.dump() << std::endl;
      return http.listen() ? 0 : 1;
    }

    if (*merge) {
      const auto base = load_manifest(m_manifest);
      const auto ledger = load_batch(m_batch);
      const DiscardList d = m_disc.empty() ? DiscardList{ledger.plan.batch_id, {}} : load_discards(m_disc);
      const auto out = merge_batch(base, m_batch, d);
      save_manifest(out.manifest, m_out);
      if (out.shortfall())
        io.err << Json{{"warning", "shortfall"}, {"accepted", out.accepted}, {"required", out.required},
                       {"missing", out.shortfall()}}.dump()
               << "\n";
      io.out << Json{{"merged", out.accepted}, {"records", out.manifest.records.size()}}.dump() << "\n";
      return 0;
    }

    if (*ew) {
      const auto m = load_manifest(w_manifest);
      detail::emit(w_out, format_weight_matrix(m.schema, weight_rows(m, w_aug.value_or(cfg.weight_augmented))), io.out);
      return 0;
    }

    if (*met) {
      const auto m = load_manifest(t_manifest);
      std::vector<std::size_t> rows;
      const auto probs = detail::load_predictions(t_preds, m, rows);
      const auto want = parse_split(t_split);
      BinaryMatrix truth(rows.size(), m.schema.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = m.records[rows[i]];
        if (r.split != want) throw ValidationError("record '" + r.id + "' is not in the " + t_split + " split");
        for (std::size_t a = 0; a < m.schema.size(); ++a) truth(i, a) = is_positive(r.labels[a]) ? 1 : 0;
      }
      const auto preds = binarize(probs, t_thr);
      const auto report = metrics_report(m.schema.names, confusion(preds, truth));
      detail::emit(t_out, format_metrics_report(report), io.out);
      const auto ex = example_metrics(preds, truth);
      const auto ma = mean_label_accuracy(attribute_metrics(confusion(preds, truth)));
      io.err << Json{{"mA", ma}, {"acc", ex.acc}, {"prec", ex.prec}, {"rec", ex.rec}, {"f1", ex.f1}}.dump() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    io.err << Json{{"error", detail::kind_of(e)}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace paraug::cli
