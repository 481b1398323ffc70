#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "relicl/autodiff/optim.hpp"
#include "relicl/model/predict.hpp"
#include "relicl/scm/scm.hpp"

namespace relicl::model {

/// One supervised ICL problem: labeled context plus labeled queries.
struct Episode {
  std::string family;
  Store store;
  pql::TaskPlan plan;
  std::vector<TaskRow> context;
  std::vector<TaskRow> queries;  // targets set
  BatchOptions batch;
};

struct PretrainConfig {
  std::size_t steps = 2000;
  double stage1_fraction = 0.2;     // leading share of single-table steps
  double existential_weight = 0.5;  // stage-2 share of existence tasks
  std::uint64_t seed = 0;
  double lr = 2e-3;
  double min_lr_fraction = 0.1;  // cosine floor
  std::size_t warmup = 50;
  double clip_norm = 1.0;
  std::size_t entities_lo = 60, entities_hi = 200;
  std::size_t context_lo = 24, context_hi = 160;
  std::size_t max_queries = 48;
  std::string checkpoint_path;        // written at the end and every checkpoint_every steps
  std::size_t checkpoint_every = 0;
  std::size_t stop_after = 0;         // stop at this step (for resumable runs), 0 = run to `steps`

  nlohmann::json to_json() const {
    return {{"steps", steps},
            {"stage1_fraction", stage1_fraction},
            {"existential_weight", existential_weight},
            {"seed", seed},
            {"lr", lr},
            {"min_lr_fraction", min_lr_fraction},
            {"warmup", warmup},
            {"clip_norm", clip_norm},
            {"entities", {entities_lo, entities_hi}},
            {"context", {context_lo, context_hi}},
            {"max_queries", max_queries}};
  }
  static PretrainConfig from_json(const nlohmann::json& j) {
    PretrainConfig c;
    c.steps = j.at("steps");
    c.stage1_fraction = j.at("stage1_fraction");
    c.existential_weight = j.at("existential_weight");
    c.seed = j.at("seed");
    c.lr = j.at("lr");
    c.min_lr_fraction = j.at("min_lr_fraction");
    c.warmup = j.at("warmup");
    c.clip_norm = j.at("clip_norm");
    c.entities_lo = j.at("entities")[0], c.entities_hi = j.at("entities")[1];
    c.context_lo = j.at("context")[0], c.context_hi = j.at("context")[1];
    c.max_queries = j.at("max_queries");
    return c;
  }
  std::size_t stage1_steps() const {
    return static_cast<std::size_t>(std::llround(stage1_fraction * static_cast<double>(steps)));
  }
};

namespace train_detail {

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline std::vector<TaskRow> with_labels(const scm::ScmTask& t) {
  auto rows = t.table.prediction;
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].target = t.labels[i];
  return rows;
}

}  // namespace train_detail

/// Draws the episode for one curriculum step. Stage 1 uses single-table SCM
/// databases; stage 2 mixes multi-table SCM tasks (static and temporal) with
/// existence tasks whose label depends on a value pattern within one child row.
inline Episode sample_episode(const PretrainConfig& cfg, std::size_t stage, std::uint64_t seed) {
  using train_detail::uniform;
  Rng rng(hash_combine(seed, 0xe915));
  scm::TaskOptions opt;
  opt.context_budget = uniform(rng, cfg.context_lo, cfg.context_hi);
  opt.max_predictions = cfg.max_queries;
  opt.prediction_fraction = 0.25;
  Episode ep;
  ep.batch.salt = rng.next();
  // Occasional extreme first-hop fanouts so inference may use any of 1..32.
  const std::size_t f1 = rng.uniform() < 0.3 ? std::size_t{1} << uniform(rng, 0, 5) : uniform(rng, 8, 16);
  ep.batch.sampler.fanouts = {f1, uniform(rng, 2, 6)};
  if (rng.uniform() < 0.2) {
    ep.batch.feature_drop = 0.3 * rng.uniform();
    ep.batch.drop_seed = rng.next();
  }
  const std::size_t entities = uniform(rng, cfg.entities_lo, cfg.entities_hi);
  scm::ScmTask task;
  if (stage >= 2 && rng.uniform() < cfg.existential_weight) {
    scm::ExistentialConfig ex;
    ex.entities = entities;
    ex.rows_hi = uniform(rng, 3, 6);
    ex.distractors = rng.uniform() < 0.8 ? 0 : 1;
    ex.random_pattern = true;
    ex.shuffle_columns = true;
    ex.entity_noise_columns = uniform(rng, 0, 2);
    task = scm::make_existential(ex, rng.next(), opt);
  } else {
    scm::ScmConfig sc;
    sc.entities = entities;
    sc.min_tables = stage >= 2 ? 2 : 1;
    sc.max_tables = stage >= 2 ? 3 : 1;
    sc.max_features = 5;
    sc.noise_scale = 0.1 + 0.4 * rng.uniform();
    sc.rows_per_entity = rng.uniform() < 0.25 ? uniform(rng, 8, 20) : uniform(rng, 2, 6);
    if (stage >= 2 && rng.uniform() < 0.3) sc.entity_signal = 0;
    if (rng.uniform() < 0.3) sc.noise_columns = uniform(rng, 1, 4);
    auto db = scm::sample_database(sc, rng.next());
    opt.family_weights = stage >= 2 ? std::vector<double>{2, 1, 1, 1, 1} : std::vector<double>{2, 1, 1, 0, 0};
    opt.lag_timesteps = uniform(rng, 0, 3);
    task = scm::sample_task(db, rng.next(), opt);
  }
  ep.family = task.family;
  ep.queries = train_detail::with_labels(task);
  ep.context = std::move(task.table.context);
  ep.plan = std::move(task.plan);
  ep.store = std::move(task.store);
  return ep;
}

/// Fixed held-out episodes (stage-2 mixture) for measuring training progress.
inline std::vector<Episode> evaluation_episodes(const PretrainConfig& cfg, std::size_t count, std::uint64_t seed) {
  std::vector<Episode> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_episode(cfg, 2, hash_combine(hash_combine(seed, 0xe7a1), i)));
  return out;
}

template <class T>
Batch episode_batch(const Model<T>& m, const Episode& ep) {
  return make_batch(m.config(), ep.store, ep.plan, ep.context, ep.queries, ep.batch);
}

template <class T>
double episode_loss(const Model<T>& m, const Episode& ep) {
  if (ep.context.empty() || ep.queries.empty()) return 0;
  ad::NoGradGuard ng;
  const auto b = episode_batch(m, ep);
  return static_cast<double>(m.loss(b, m.forward(b)).item());
}

template <class T>
double mean_loss(const Model<T>& m, const std::vector<Episode>& eps) {
  double s = 0;
  for (const auto& e : eps) s += episode_loss(m, e);
  return eps.empty() ? 0 : s / static_cast<double>(eps.size());
}

/// Forward, backward and one Adam update. Throws TrainingError when the loss
/// or gradient is not finite; parameters are left untouched in that case.
template <class T>
double train_step(Model<T>& m, const Batch& b, const ad::AdamConfig& adam, std::size_t step) {
  m.params().zero_grad();
  auto loss = m.loss(b, m.forward(b));
  const double v = static_cast<double>(loss.item());
  if (!std::isfinite(v)) throw TrainingError("training diverged: loss is not finite at step " + std::to_string(step));
  ad::backward(loss);
  if (!std::isfinite(m.params().grad_norm()))
    throw TrainingError("training diverged: gradient is not finite at step " + std::to_string(step));
  ad::adam_step(m.params(), adam);
  return v;
}

inline double scheduled_lr(const PretrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup);
  const double span = static_cast<double>(std::max<std::size_t>(cfg.steps - std::min(cfg.steps, cfg.warmup), 1));
  const double p = std::min(1.0, static_cast<double>(step - cfg.warmup) / span);
  const double floor = cfg.min_lr_fraction;
  return cfg.lr * (floor + (1 - floor) * 0.5 * (1 + std::cos(M_PI * p)));
}

struct PretrainReport {
  std::size_t start_step = 0, end_step = 0;
  std::vector<double> losses;  // one per executed step
  double seconds = 0;
};

template <class T>
nlohmann::json pretrain_manifest(const Model<T>& m, const PretrainConfig& cfg) {
  return {{"kind", "pretrain"}, {"model", m.config().to_json()}, {"pretrain", cfg.to_json()}};
}

/// Curriculum pre-training from the model's current optimizer step. Every
/// step's episode derives from (seed, step) alone, so a run resumed from a
/// checkpoint continues bit-exactly.
template <class T>
PretrainReport pretrain(Model<T>& m, const PretrainConfig& cfg,
                        const std::function<void(std::size_t, double)>& on_step = {}) {
  PretrainReport rep;
  rep.start_step = m.params().step();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t end = cfg.stop_after ? std::min(cfg.stop_after, cfg.steps) : cfg.steps;
  const std::size_t stage1 = cfg.stage1_steps();
  auto save = [&] {
    if (!cfg.checkpoint_path.empty()) ad::save_checkpoint(m.params(), pretrain_manifest(m, cfg), cfg.checkpoint_path);
  };
  for (std::size_t step = rep.start_step; step < end; ++step) {
    const std::size_t stage = step < stage1 ? 1 : 2;
    const auto ep = sample_episode(cfg, stage, hash_combine(cfg.seed, step));
    if (ep.context.empty() || ep.queries.empty()) {
      m.params().bump_step();
      rep.losses.push_back(0);
      continue;
    }
    ad::AdamConfig adam;
    adam.lr = scheduled_lr(cfg, step);
    adam.clip_norm = cfg.clip_norm;
    const double v = train_step(m, episode_batch(m, ep), adam, step);
    rep.losses.push_back(v);
    if (on_step) on_step(step, v);
    if (cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0) save();
  }
  rep.end_step = m.params().step();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save();
  return rep;
}

/// Rebuilds a model from a checkpoint written by pretrain or fine_tune.
template <class T>
Model<T> load_model(const std::string& path) {
  auto manifest = ad::read_checkpoint_manifest(path);
  if (!manifest.contains("model")) throw InputError("checkpoint '" + path + "' has no model configuration");
  Model<T> m(ModelConfig::from_json(manifest.at("model")), 0);
  ad::load_checkpoint(m.params(), path);
  return m;
}

struct FineTuneConfig {
  std::size_t steps = 100;
  double lr = 5e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;  // entities held out for the evaluation hook
  double query_fraction = 0.3;       // pseudo-queries per step
  std::size_t max_queries = 64;
  std::size_t max_context = 256;
  double max_seconds = 110;  // stops early past this wall-clock budget
  BatchOptions batch;
};

struct FineTuneReport {
  std::size_t steps_run = 0;
  double base_loss = 0, tuned_loss = 0;  // on held-out context entities
  bool kept = false;                     // tuned parameters kept
  double seconds = 0;
};

/// Continues training on pseudo-tasks carved from the task's own context,
/// then compares against the frozen base on held-out context entities and
/// keeps whichever is better. Zero steps leaves the model unchanged.
template <class T>
FineTuneReport fine_tune(Model<T>& m, const Store& store, const pql::TaskPlan& plan, const TaskTable& table,
                         const FineTuneConfig& cfg) {
  FineTuneReport rep;
  if (cfg.steps == 0) return rep;
  if (table.context.size() < 4) throw InputError("fine-tuning needs at least 4 labeled context rows");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(hash_combine(cfg.seed, 0xf1e));

  // Split by entity so held-out rows share no entity with training rows.
  std::vector<std::uint32_t> ents;
  for (const auto& r : table.context) ents.push_back(r.entity);
  std::sort(ents.begin(), ents.end());
  ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
  rng.shuffle(ents);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(cfg.validation_fraction * static_cast<double>(ents.size()))), 1,
      ents.size() - 1);
  std::unordered_set<std::uint32_t> val(ents.begin(), ents.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> pool, held;
  for (std::size_t i = 0; i < table.context.size(); ++i) (val.count(table.context[i].entity) ? held : pool).push_back(i);
  if (pool.size() < 2 || held.empty()) throw InputError("fine-tuning needs labeled rows from at least 3 entities");

  // Subgraphs are sampled once per context row and reused.
  std::vector<SampledSubgraph> sgs;
  for (const auto& r : table.context)
    sgs.push_back(sample_subgraph(store, {static_cast<std::uint32_t>(plan.entity_table), r.entity}, r.anchor, cfg.batch.sampler));
  auto batch_of = [&](const std::vector<std::size_t>& ctx, const std::vector<std::size_t>& qry) {
    std::vector<TaskRow> c, q;
    std::vector<SampledSubgraph> s;
    for (auto i : ctx) c.push_back(table.context[i]), s.push_back(sgs[i]);
    for (auto i : qry) q.push_back(table.context[i]), s.push_back(sgs[i]);
    return build_batch(m.config(), store, plan, c, q, s, cfg.batch);
  };
  std::vector<std::size_t> val_ctx = pool;
  if (val_ctx.size() > cfg.max_context) {
    rng.shuffle(val_ctx);
    val_ctx.resize(cfg.max_context);
  }
  const Batch val_batch = batch_of(val_ctx, held);
  auto val_loss = [&] {
    ad::NoGradGuard ng;
    return static_cast<double>(m.loss(val_batch, m.forward(val_batch)).item());
  };
  rep.base_loss = val_loss();

  auto& ps = m.params();
  std::vector<std::vector<T>> values, m1, m2;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    values.push_back(ps.tensors()[i].value());
    m1.push_back(ps.first_moment(i));
    m2.push_back(ps.second_moment(i));
    std::fill(ps.first_moment(i).begin(), ps.first_moment(i).end(), T(0));
    std::fill(ps.second_moment(i).begin(), ps.second_moment(i).end(), T(0));
  }
  const std::size_t base_step = ps.step();
  ps.set_step(0);

  ad::AdamConfig adam;
  adam.lr = cfg.lr;
  adam.clip_norm = cfg.clip_norm;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    auto order = pool;
    rng.shuffle(order);
    std::size_t nq = static_cast<std::size_t>(std::ceil(cfg.query_fraction * static_cast<double>(order.size())));
    nq = std::clamp<std::size_t>(nq, 1, std::min(order.size() - 1, cfg.max_queries));
    std::vector<std::size_t> qry(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nq));
    std::vector<std::size_t> ctx(order.begin() + static_cast<std::ptrdiff_t>(nq), order.end());
    if (ctx.size() > cfg.max_context) ctx.resize(cfg.max_context);
    train_step(m, batch_of(ctx, qry), adam, step);
    ++rep.steps_run;
    if (std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() > cfg.max_seconds) break;
  }
  rep.tuned_loss = val_loss();
  rep.kept = rep.tuned_loss <= rep.base_loss;
  if (!rep.kept) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
      ps.tensors()[i].value() = values[i];
      ps.first_moment(i) = m1[i];
      ps.second_moment(i) = m2[i];
    }
    ps.set_step(base_step);
  }
  ps.zero_grad();
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace relicl::model
