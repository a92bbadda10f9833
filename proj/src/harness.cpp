#include "psnlab/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"
#include "psnlab/rollout.hpp"

#include "json.hpp"

namespace psnlab {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kTagTrainTask = 0xA001;
constexpr std::uint64_t kTagEvalTask = 0xA002;
constexpr std::uint64_t kTagTaskSelect = 0xA003;
constexpr std::uint64_t kTagEvalRollout = 0xA004;
constexpr std::uint64_t kTagSweepRun = 0xA005;

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown config key '" + it.key() + "' in " + where);
    }
  }
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace

RunConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  reject_unknown_keys(j, {"policy", "env", "trainer", "noise", "scheduler", "eval",
                          "master_seed", "output_dir"},
                      "top level");

  if (j.contains("policy")) {
    const json& p = j["policy"];
    reject_unknown_keys(p, {"vocab_size", "context_len", "d_model", "n_blocks", "d_mlp", "seed"},
                        "policy");
    cfg.policy.vocab_size = p.value("vocab_size", cfg.policy.vocab_size);
    cfg.policy.context_len = p.value("context_len", cfg.policy.context_len);
    cfg.policy.d_model = p.value("d_model", cfg.policy.d_model);
    cfg.policy.n_blocks = p.value("n_blocks", cfg.policy.n_blocks);
    cfg.policy.d_mlp = p.value("d_mlp", cfg.policy.d_mlp);
    cfg.policy.seed = p.value("seed", cfg.policy.seed);
  }
  if (j.contains("env")) {
    const json& e = j["env"];
    reject_unknown_keys(e, {"env_id", "difficulty", "num_train_tasks", "num_eval_tasks"}, "env");
    if (e.contains("env_id")) cfg.env.env_id = env_from_name(e["env_id"].get<std::string>());
    cfg.env.difficulty = e.value("difficulty", cfg.env.difficulty);
    cfg.env.num_train_tasks = e.value("num_train_tasks", cfg.env.num_train_tasks);
    cfg.env.num_eval_tasks = e.value("num_eval_tasks", cfg.env.num_eval_tasks);
  }
  if (j.contains("trainer")) {
    const json& t = j["trainer"];
    reject_unknown_keys(t,
                        {"clip_eps", "tis_cap", "kl_coef", "lr", "adv_eps", "group_size",
                         "iterations", "prompt_batch", "minibatch_passes", "temperature",
                         "max_completion_len", "per_query_noise"},
                        "trainer");
    cfg.trainer.clip_eps = t.value("clip_eps", cfg.trainer.clip_eps);
    if (t.contains("tis_cap")) {
      // 0 disables truncation (cap = +infinity).
      const double cap = t["tis_cap"].get<double>();
      cfg.trainer.tis_cap = cap == 0.0 ? std::numeric_limits<double>::infinity() : cap;
    }
    cfg.trainer.kl_coef = t.value("kl_coef", cfg.trainer.kl_coef);
    cfg.trainer.lr = t.value("lr", cfg.trainer.lr);
    cfg.trainer.adv_eps = t.value("adv_eps", cfg.trainer.adv_eps);
    cfg.trainer.group_size = t.value("group_size", cfg.trainer.group_size);
    cfg.trainer.iterations = t.value("iterations", cfg.trainer.iterations);
    cfg.trainer.prompt_batch = t.value("prompt_batch", cfg.trainer.prompt_batch);
    cfg.trainer.minibatch_passes = t.value("minibatch_passes", cfg.trainer.minibatch_passes);
    cfg.trainer.temperature = t.value("temperature", cfg.trainer.temperature);
    cfg.trainer.max_completion_len = t.value("max_completion_len", cfg.trainer.max_completion_len);
    cfg.trainer.per_query_noise = t.value("per_query_noise", cfg.trainer.per_query_noise);
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    reject_unknown_keys(n, {"sigma", "target_groups", "noise_seed"}, "noise");
    cfg.noise.sigma = n.value("sigma", cfg.noise.sigma);
    cfg.noise.noise_seed = n.value("noise_seed", cfg.noise.noise_seed);
    if (n.contains("target_groups")) {
      cfg.noise.target_groups.clear();
      for (const auto& name : n["target_groups"]) {
        const std::string s = name.get<std::string>();
        if (s == "all") {
          cfg.noise.target_groups = NoiseSpec::all_groups();
        } else {
          cfg.noise.target_groups.insert(group_from_name(s));
        }
      }
    }
  }
  if (j.contains("scheduler")) {
    const json& s = j["scheduler"];
    reject_unknown_keys(s, {"mode", "sigma_init", "beta", "kl_target", "history_cap"},
                        "scheduler");
    if (s.contains("mode")) cfg.scheduler.mode = scheduler_mode_from_name(s["mode"].get<std::string>());
    cfg.scheduler.sigma_init = s.value("sigma_init", cfg.scheduler.sigma_init);
    cfg.scheduler.beta = s.value("beta", cfg.scheduler.beta);
    cfg.scheduler.kl_target = s.value("kl_target", cfg.scheduler.kl_target);
    cfg.scheduler.history_cap = s.value("history_cap", cfg.scheduler.history_cap);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    reject_unknown_keys(e, {"n_samples", "k_list", "eval_temperature"}, "eval");
    cfg.eval.n_samples = e.value("n_samples", cfg.eval.n_samples);
    if (e.contains("k_list")) cfg.eval.k_list = e["k_list"].get<std::vector<int>>();
    cfg.eval.eval_temperature = e.value("eval_temperature", cfg.eval.eval_temperature);
  }
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);

  cfg.policy.validate();
  cfg.trainer.validate();
  cfg.noise.validate();
  for (int k : cfg.eval.k_list) {
    if (k < 1 || k > cfg.eval.n_samples) throw ConfigError("k_list entry outside [1, n_samples]");
  }
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["policy"] = {{"vocab_size", cfg.policy.vocab_size}, {"context_len", cfg.policy.context_len},
                 {"d_model", cfg.policy.d_model},       {"n_blocks", cfg.policy.n_blocks},
                 {"d_mlp", cfg.policy.d_mlp},           {"seed", cfg.policy.seed}};
  j["env"] = {{"env_id", env_name(cfg.env.env_id)},
              {"difficulty", cfg.env.difficulty},
              {"num_train_tasks", cfg.env.num_train_tasks},
              {"num_eval_tasks", cfg.env.num_eval_tasks}};
  j["trainer"] = {{"clip_eps", cfg.trainer.clip_eps},
                  {"tis_cap", std::isfinite(cfg.trainer.tis_cap) ? cfg.trainer.tis_cap : 0.0},
                  {"kl_coef", cfg.trainer.kl_coef},
                  {"lr", cfg.trainer.lr},
                  {"adv_eps", cfg.trainer.adv_eps},
                  {"group_size", cfg.trainer.group_size},
                  {"iterations", cfg.trainer.iterations},
                  {"prompt_batch", cfg.trainer.prompt_batch},
                  {"minibatch_passes", cfg.trainer.minibatch_passes},
                  {"temperature", cfg.trainer.temperature},
                  {"max_completion_len", cfg.trainer.max_completion_len},
                  {"per_query_noise", cfg.trainer.per_query_noise}};
  std::vector<std::string> groups;
  for (ParamGroup g : cfg.noise.target_groups) groups.push_back(group_name(g));
  j["noise"] = {{"sigma", cfg.noise.sigma}, {"target_groups", groups},
                {"noise_seed", cfg.noise.noise_seed}};
  j["scheduler"] = {{"mode", scheduler_mode_name(cfg.scheduler.mode)},
                    {"sigma_init", cfg.scheduler.sigma_init},
                    {"beta", cfg.scheduler.beta},
                    {"kl_target", cfg.scheduler.kl_target},
                    {"history_cap", cfg.scheduler.history_cap}};
  j["eval"] = {{"n_samples", cfg.eval.n_samples},
               {"k_list", cfg.eval.k_list},
               {"eval_temperature", cfg.eval.eval_temperature}};
  j["master_seed"] = cfg.master_seed;
  j["output_dir"] = cfg.output_dir;
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig cfg = parse_config_json(ss.str());
  if (const char* dir = std::getenv("PSNLAB_OUTPUT_DIR")) cfg.output_dir = dir;
  if (const char* seed = std::getenv("PSNLAB_MASTER_SEED")) {
    cfg.master_seed = std::strtoull(seed, nullptr, 10);
  }
  return cfg;
}

std::vector<TaskInstance> training_task_pool(const RunConfig& cfg) {
  std::vector<TaskInstance> pool;
  pool.reserve(cfg.env.num_train_tasks);
  for (int i = 0; i < cfg.env.num_train_tasks; ++i) {
    pool.push_back(sample_task(cfg.env.env_id, cfg.env.difficulty,
                               rng::derive(cfg.master_seed, kTagTrainTask, i)));
  }
  return pool;
}

std::vector<TaskInstance> eval_task_pool(const RunConfig& cfg) {
  std::vector<TaskInstance> pool;
  pool.reserve(cfg.env.num_eval_tasks);
  for (int i = 0; i < cfg.env.num_eval_tasks; ++i) {
    pool.push_back(sample_task(cfg.env.env_id, cfg.env.difficulty,
                               rng::derive(cfg.master_seed, kTagEvalTask, i)));
  }
  return pool;
}

TrainOutputs run_train(const RunConfig& cfg) {
  cfg.policy.validate();
  cfg.trainer.validate();
  fs::create_directories(cfg.output_dir);

  TrainOutputs out;
  out.checkpoint_path = cfg.output_dir + "/checkpoint.bin";
  out.metrics_path = cfg.output_dir + "/metrics.csv";
  out.rollout_log_path = cfg.output_dir + "/rollouts.jsonl";

  {
    std::ofstream os(cfg.output_dir + "/config.json");
    os << config_to_json(cfg);
  }

  ParameterSet params = init_params(cfg.policy);
  TrainerState state = TrainerState::make(params);
  SchedulerState sched = SchedulerState::make(cfg.scheduler.mode, cfg.resolved_sigma_init(),
                                              cfg.scheduler.beta, cfg.scheduler.kl_target,
                                              cfg.scheduler.history_cap);
  const std::vector<TaskInstance> pool = training_task_pool(cfg);

  std::ofstream metrics(out.metrics_path);
  std::ofstream rollout_log(out.rollout_log_path);
  if (!metrics || !rollout_log) throw ResourceError("cannot open output files in " + cfg.output_dir);
  metrics << "iteration,mean_reward,loss,kl_to_ref,sigma,mean_tis_weight,frac_tis_capped,"
             "mean_entropy,grad_norm,d_sem_mean,sc_mean,sc_norm,indicator,indicator_hist_mean\n";

  for (int it = 0; it < cfg.trainer.iterations; ++it) {
    // Iteration task batch drawn from the fixed training pool.
    rng::Stream sel(rng::derive(cfg.master_seed, kTagTaskSelect, it));
    std::vector<TaskInstance> tasks;
    tasks.reserve(cfg.trainer.prompt_batch);
    for (int q = 0; q < cfg.trainer.prompt_batch; ++q) {
      tasks.push_back(pool[sel.below(pool.size())]);
    }

    IterationResult res =
        train_iteration(state, sched, tasks, cfg.trainer, cfg.noise, it, cfg.master_seed);

    const IterationMetrics& m = res.metrics;
    metrics << m.iteration << ',' << fmt_double(m.mean_reward) << ',' << fmt_double(m.loss) << ','
            << fmt_double(m.kl_to_ref) << ',' << fmt_double(m.sigma) << ','
            << fmt_double(m.mean_tis_weight) << ',' << fmt_double(m.frac_tis_capped) << ','
            << fmt_double(m.mean_entropy) << ',' << fmt_double(m.grad_norm) << ','
            << fmt_double(m.v2.d_sem_mean) << ',' << fmt_double(m.v2.sc_mean) << ','
            << fmt_double(m.v2.sc_norm) << ',' << fmt_double(m.v2.indicator) << ','
            << fmt_double(m.v2.indicator_hist_mean) << '\n';

    for (const GroupBatch& gb : res.batches) {
      for (const Rollout& r : gb.rollouts) {
        rollout_log << rollout_log_line(r, it, m.sigma, res.spec_used) << '\n';
      }
    }
    out.final_mean_reward = m.mean_reward;
  }

  save_params(state.params, out.checkpoint_path);
  if (!metrics || !rollout_log) throw ResourceError("output write failed in " + cfg.output_dir);
  return out;
}

EvalReport run_eval(const ParameterSet& params, const RunConfig& cfg,
                    const std::string& report_path) {
  for (int k : cfg.eval.k_list) {
    if (k > cfg.eval.n_samples) throw InputError("eval k exceeds n_samples");
  }
  EvalReport report;
  const std::vector<TaskInstance> tasks = eval_task_pool(cfg);
  double cos_sum = 0.0, sem_sum = 0.0, op_sum = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::uint64_t key = rng::derive(cfg.master_seed, kTagEvalRollout, i);
    GroupBatch gb = generate_group(params, params, NoiseSpec{}, tasks[i], cfg.eval.n_samples,
                                   cfg.eval.eval_temperature, cfg.trainer.max_completion_len, key);
    EvalRecord rec;
    rec.task = tasks[i];
    rec.n = cfg.eval.n_samples;
    for (const Rollout& r : gb.rollouts) {
      rec.c += r.reward;
      rec.rollout_texts.push_back(r.tokens);
      rec.op_sequences.push_back(r.op_sequence);
    }
    const SemanticDiversity sd = semantic_diversity(rec.rollout_texts);
    cos_sum += sd.mean_pairwise_cosine;
    sem_sum += sd.diversity;
    op_sum += operation_diversity(rec.op_sequences);
    report.records.push_back(std::move(rec));
  }
  const double nt = static_cast<double>(tasks.size());
  report.mean_cosine = cos_sum / nt;
  report.semantic_div = sem_sum / nt;
  report.operation_div = op_sum / nt;
  for (int k : cfg.eval.k_list) {
    report.pass_at_k_rows.emplace_back(k, pass_at_k_dataset(report.records, k));
  }
  report.mean_reward = pass_at_k_dataset(report.records, 1);

  if (!report_path.empty()) {
    std::ofstream os(report_path);
    if (!os) throw ResourceError("cannot open eval report: " + report_path);
    os << "k,pass_at_k,mean_cosine,semantic_diversity,operation_diversity\n";
    for (const auto& [k, v] : report.pass_at_k_rows) {
      os << k << ',' << fmt_double(v) << ',' << fmt_double(report.mean_cosine) << ','
         << fmt_double(report.semantic_div) << ',' << fmt_double(report.operation_div) << '\n';
    }
  }
  return report;
}

EvalReport run_eval_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg,
                               const std::string& report_path) {
  return run_eval(load_params(checkpoint_path), cfg, report_path);
}

std::string run_sweep(const std::string& preset, const RunConfig& base) {
  struct Point {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Point> points;
  auto add = [&](const std::string& name, RunConfig c) { points.push_back({name, std::move(c)}); };

  if (preset == "injection_site") {
    for (const auto& [name, groups] :
         std::vector<std::pair<std::string, std::set<ParamGroup>>>{
             {"all", NoiseSpec::all_groups()},
             {"mlp", NoiseSpec::mlp_only()},
             {"head", NoiseSpec::head_only()}}) {
      RunConfig c = base;
      c.noise.target_groups = groups;
      add("site_" + name, c);
    }
  } else if (preset == "sigma_grid") {
    const double s = base.noise.sigma;
    int idx = 0;
    for (double mult : {0.0, 1.0, 1.25, 1.5}) {
      RunConfig c = base;
      c.noise.sigma = s * mult;
      if (c.noise.sigma == 0.0) c.noise.target_groups = NoiseSpec::mlp_only();
      add("sigma_" + std::to_string(idx++), c);
    }
  } else if (preset == "tis_ablation") {
    RunConfig capped = base;
    capped.trainer.tis_cap = 10.0;
    add("tis_cap10", capped);
    RunConfig uncapped = base;
    uncapped.trainer.tis_cap = std::numeric_limits<double>::infinity();
    add("tis_uncapped", uncapped);
  } else if (preset == "scheduler_mode") {
    for (SchedulerMode m : {SchedulerMode::Fixed, SchedulerMode::VariantI, SchedulerMode::VariantII}) {
      RunConfig c = base;
      c.scheduler.mode = m;
      add(std::string("sched_") + scheduler_mode_name(m), c);
    }
  } else if (preset == "train_temperature") {
    int idx = 0;
    for (double t : {1.0, 1.2, 1.5}) {
      RunConfig c = base;
      c.trainer.temperature = t;
      c.noise.sigma = 0.0;  // action-space-noise baseline axis
      add("temp_" + std::to_string(idx++), c);
    }
  } else {
    throw ConfigError("unknown sweep preset: " + preset);
  }

  const std::string sweep_dir = base.output_dir + "/sweep_" + preset;
  fs::create_directories(sweep_dir);
  std::ofstream summary(sweep_dir + "/summary.csv");
  if (!summary) throw ResourceError("cannot open sweep summary in " + sweep_dir);
  summary << "run,sigma,tis_cap,temperature,scheduler_mode,target_groups,final_train_reward";
  for (int k : base.eval.k_list) summary << ",pass_at_" << k;
  summary << ",mean_cosine,semantic_diversity,operation_diversity\n";

  for (std::size_t i = 0; i < points.size(); ++i) {
    RunConfig& c = points[i].cfg;
    c.output_dir = sweep_dir + "/" + points[i].name;
    c.master_seed = rng::derive(base.master_seed, kTagSweepRun, i);
    const TrainOutputs t = run_train(c);
    const EvalReport r = run_eval_checkpoint(t.checkpoint_path, c, c.output_dir + "/eval_report.csv");
    std::string groups;
    for (ParamGroup g : c.noise.target_groups) {
      if (!groups.empty()) groups += '+';
      groups += group_name(g);
    }
    summary << points[i].name << ',' << fmt_double(c.noise.sigma) << ','
            << fmt_double(c.trainer.tis_cap) << ',' << fmt_double(c.trainer.temperature) << ','
            << scheduler_mode_name(c.scheduler.mode) << ',' << groups << ','
            << fmt_double(t.final_mean_reward);
    for (const auto& [k, v] : r.pass_at_k_rows) {
      (void)k;
      summary << ',' << fmt_double(v);
    }
    summary << ',' << fmt_double(r.mean_cosine) << ',' << fmt_double(r.semantic_div) << ','
            << fmt_double(r.operation_div) << '\n';
  }
  return sweep_dir;
}

std::vector<EvalRecord> records_from_log(const std::string& jsonl_path) {
  std::ifstream is(jsonl_path);
  if (!is) throw ResourceError("cannot open rollout log: " + jsonl_path);
  // Group rollouts by (env_id, task_seed), preserving first-seen order.
  std::vector<EvalRecord> records;
  std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(std::string("bad rollout log line: ") + e.what());
    }
    const std::string env = j.at("env_id").get<std::string>();
    const std::uint64_t seed = j.at("task_seed").get<std::uint64_t>();
    const auto key = std::make_pair(env, seed);
    if (!index.count(key)) {
      index[key] = records.size();
      records.emplace_back();
      records.back().task.env_id = env_from_name(env);
      records.back().task.instance_seed = seed;
    }
    EvalRecord& rec = records[index[key]];
    rec.n += 1;
    rec.c += j.at("reward").get<int>();
    rec.rollout_texts.push_back(j.at("tokens").get<TokenSeq>());
    rec.op_sequences.push_back(j.at("op_sequence").get<std::vector<std::string>>());
  }
  if (records.empty()) throw InputError("rollout log is empty: " + jsonl_path);
  return records;
}

}  // namespace psnlab
