#include "sfnet/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "sfnet/model/checkpoint.hpp"

namespace sfnet::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be > 0");
  if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
  if (batch == 0) throw std::invalid_argument("batch must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("betas must lie in [0, 1)");
  if (!(eps > 0)) throw std::invalid_argument("eps must be > 0");
  if (weight_decay < 0) throw std::invalid_argument("weight decay must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},         {"lr_min", c.min_lr()}, {"beta1", c.beta1},
          {"beta2", c.beta2},   {"eps", c.eps},         {"weight_decay", c.weight_decay},
          {"epochs", c.epochs}, {"batch", c.batch},     {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  const nlohmann::json known = to_json(TrainConfig{});
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("unknown train config key '" + key + "'");
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.lr_min = j.value("lr_min", c.lr_min);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch = j.value("batch", c.batch);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed train config: ") + e.what());
  }
  c.validate();
  return c;
}

void adamw_update(Parameter<float>& p, AdamWState& s, std::size_t t, double lr,
                  const TrainConfig& cfg) {
  if (t == 0) throw std::invalid_argument("adamw step index starts at 1");
  if (s.m.shape() != p.value.shape()) {
    s.m = Tensor<float>(p.value.shape());
    s.v = Tensor<float>(p.value.shape());
  }
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double decay = p.decay ? 1.0 - lr * cfg.weight_decay : 1.0;
  for (std::size_t i = 0; i < p.value.numel(); ++i) {
    const double g = p.grad[i];
    const double m = b1 * s.m[i] + (1 - b1) * g;
    const double v = b2 * s.v[i] + (1 - b2) * g * g;
    s.m[i] = static_cast<float>(m);
    s.v[i] = static_cast<float>(v);
    const double mhat = m / c1, vhat = v / c2;
    const double w = static_cast<double>(p.value[i]) * decay;
    p.value[i] = static_cast<float>(w - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

AdamW::AdamW(std::vector<Parameter<float>*> params, const TrainConfig& cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

bool AdamW::step(double lr) {
  for (const Parameter<float>* p : params_) {
    if (!p->grad.all_finite()) {
      ++skipped_;
      return false;
    }
  }
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) adamw_update(*params_[i], state_[i], t_, lr, cfg_);
  return true;
}

double cosine_lr(std::size_t epoch, std::size_t total, double lr_max, double lr_min) {
  if (total <= 1) return lr_max;
  if (epoch >= total) throw std::out_of_range("epoch beyond schedule length");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total - 1);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

void ConfusionCounts::add(int label, int prediction) {
  if (label == 1) (prediction == 1 ? tp : fn)++;
  else (prediction == 1 ? fp : tn)++;
}

Metrics metrics(const ConfusionCounts& c) {
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.acc = ratio(c.tp + c.tn, c.total());
  m.sen = ratio(c.tp, c.tp + c.fn);
  m.spe = ratio(c.tn, c.tn + c.fp);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
  std::size_t npos = 0;
  for (int l : labels) npos += l == 1 ? 1 : 0;
  const std::size_t nneg = labels.size() - npos;
  if (npos == 0 || nneg == 0) throw std::invalid_argument("auc needs both classes present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += midrank;
    i = j;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

MetricSummary summarize(const std::vector<std::optional<double>>& values) {
  MetricSummary s;
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
    else ++s.undefined;
  }
  s.defined = v.size();
  if (v.empty()) return s;
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) {
    s.mean = v[0];
    if (v.size() >= 2) s.sd = 0.0;
    return s;
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.mean = mean;
  if (v.size() >= 2) {
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) {
  if (!v) return "NA";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

Tensor<float> Dataset::batch(const std::vector<std::size_t>& idx) const {
  if (idx.empty()) throw std::invalid_argument("empty batch");
  const Shape& vs = volumes.at(idx[0]).shape();
  Shape s{idx.size()};
  s.insert(s.end(), vs.begin(), vs.end());
  Tensor<float> out(s);
  const std::size_t per = shape_numel(vs);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor<float>& v = volumes.at(idx[b]);
    if (v.shape() != vs) throw std::invalid_argument("volumes in a batch differ in shape");
    std::copy(v.data(), v.data() + per, out.data() + b * per);
  }
  return out;
}

void Dataset::add(Tensor<float> volume, int label, std::string id) {
  volumes.push_back(std::move(volume));
  labels.push_back(label);
  ids.push_back(std::move(id));
}

Dataset load_dataset(const std::vector<data::VolumeRecord>& records,
                     const std::vector<std::size_t>& indices) {
  Dataset ds;
  for (std::size_t i : indices) {
    const data::VolumeRecord& r = records.at(i);
    ds.add(data::normalize_volume(data::load_volume(r)).volume, r.label, r.subject_id);
  }
  return ds;
}

EvalResult evaluate(model::SFNet<float>& model, const Dataset& ds, std::size_t batch) {
  EvalResult res;
  double loss_sum = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch); ++i) idx.push_back(i);
    Tape<float> tape;
    tape.set_grad_enabled(false);
    const Tensor<float>& logits =
        model.forward(tape, tape.constant(ds.batch(idx)), ops::Mode::kEval).value();
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = logits.data() + b * k;
      double mx = row[0];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double z = 0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
      const int label = ds.labels[idx[b]];
      loss_sum += -(row[label] - mx - std::log(z));
      const double p1 = std::exp(row[1] - mx) / z;
      int pred = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[pred]) pred = static_cast<int>(j);
      res.counts.add(label, pred);
      res.scores.push_back(p1);
      res.labels.push_back(label);
    }
  }
  res.loss = ds.size() ? loss_sum / static_cast<double>(ds.size()) : 0.0;
  res.metrics = metrics(res.counts);
  const bool both = std::count(res.labels.begin(), res.labels.end(), 1) > 0 &&
                    std::count(res.labels.begin(), res.labels.end(), 0) > 0;
  if (both) res.auc = auc(res.scores, res.labels);
  return res;
}

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"acc", optional_json(m.acc)},
          {"sen", optional_json(m.sen)},
          {"spe", optional_json(m.spe)},
          {"f1", optional_json(m.f1)}};
}

}  // namespace

nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j = metrics_json(r.metrics);
  j["auc"] = optional_json(r.auc);
  j["loss"] = r.loss;
  j["counts"] = {{"tp", r.counts.tp}, {"fn", r.counts.fn}, {"fp", r.counts.fp}, {"tn", r.counts.tn}};
  j["scores"] = r.scores;
  j["labels"] = r.labels;
  return j;
}

nlohmann::json to_json(const FoldResult& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochLog& e : r.epochs) {
    nlohmann::json row = metrics_json(e.val);
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val", row},
                      {"val_auc", optional_json(e.val_auc)}});
  }
  return {{"fold", r.fold},
          {"best_epoch", r.best_epoch},
          {"skipped_steps", r.skipped_steps},
          {"final_train_accuracy", r.final_train_accuracy},
          {"epochs", epochs},
          {"test_best", r.test_best ? to_json(*r.test_best) : nlohmann::json(nullptr)},
          {"test_final", r.test_final ? to_json(*r.test_final) : nlohmann::json(nullptr)}};
}

void write_epoch_csv(const fs::path& path, const std::vector<EpochLog>& epochs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,lr,train_loss,val_acc,val_sen,val_spe,val_f1,val_auc\n";
  for (const EpochLog& e : epochs) {
    out << e.epoch << ',' << optional_csv(e.lr) << ',' << optional_csv(e.train_loss) << ','
        << optional_csv(e.val.acc) << ',' << optional_csv(e.val.sen) << ','
        << optional_csv(e.val.spe) << ',' << optional_csv(e.val.f1) << ','
        << optional_csv(e.val_auc) << '\n';
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

std::vector<Tensor<float>> snapshot(model::SFNet<float>& m) {
  std::vector<Tensor<float>> s;
  m.visit([&](Parameter<float>& p) { s.push_back(p.value); });
  return s;
}

void restore(model::SFNet<float>& m, const std::vector<Tensor<float>>& s) {
  std::size_t i = 0;
  m.visit([&](Parameter<float>& p) { p.value = s.at(i++); });
}

bool better(const EpochLog& a, const EpochLog& b) {
  const double aa = a.val.acc.value_or(-1), ba = b.val.acc.value_or(-1);
  if (aa != ba) return aa > ba;
  return a.val_loss < b.val_loss;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                   std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < order.size(); s += batch)
    out.emplace_back(order.begin() + static_cast<long>(s),
                     order.begin() + static_cast<long>(std::min(order.size(), s + batch)));
  if (out.size() >= 2 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

}  // namespace

FoldResult train_fold(const model::SFNetConfig& model_cfg, const Dataset& train_set,
                      const Dataset& val_set, const Dataset* test_set, const TrainConfig& cfg,
                      std::size_t fold, const fs::path& out_dir) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("empty training set");
  model::SFNet<float> net(model_cfg, derive_seed(cfg.seed, 1, fold));
  AdamW opt(net.trainable_parameters(), cfg);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2, fold));

  FoldResult res;
  res.fold = fold;
  std::vector<Tensor<float>> best_state;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.min_lr());
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (const auto& idx : make_batches(order, cfg.batch)) {
      net.zero_grad();
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.labels[i]);
      Tape<float> tape;
      Var<float> loss = ops::softmax_cross_entropy(
          net.forward(tape, tape.constant(train_set.batch(idx)), ops::Mode::kTrain), labels);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw TrainDivergence(fold, epoch, "training loss became non-finite in fold " +
                                               std::to_string(fold) + ", epoch " +
                                               std::to_string(epoch));
      }
      tape.backward(loss);
      opt.step(log.lr);
      loss_sum += lv * static_cast<double>(idx.size());
    }
    log.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (val_set.size() > 0) {
      const EvalResult v = evaluate(net, val_set, cfg.batch);
      log.val = v.metrics;
      log.val_auc = v.auc;
      log.val_loss = v.loss;
    }
    if (res.epochs.empty() || better(log, res.epochs[res.best_epoch])) {
      res.best_epoch = epoch;
      best_state = snapshot(net);
    }
    res.epochs.push_back(log);
  }
  res.skipped_steps = opt.skipped();
  res.final_train_accuracy = evaluate(net, train_set, cfg.batch).metrics.acc.value_or(0);

  const std::string tag = "fold" + std::to_string(fold);
  const nlohmann::json meta_final{{"fold", fold}, {"epoch", cfg.epochs - 1}, {"kind", "final"}};
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_epoch_csv(out_dir / (tag + "_epochs.csv"), res.epochs);
    model::save_checkpoint(net, out_dir / (tag + "_final"), meta_final);
  }
  if (test_set && test_set->size() > 0) res.test_final = evaluate(net, *test_set, cfg.batch);
  restore(net, best_state);
  if (!out_dir.empty()) {
    model::save_checkpoint(net, out_dir / (tag + "_best"),
                           {{"fold", fold}, {"epoch", res.best_epoch}, {"kind", "best"}});
  }
  if (test_set && test_set->size() > 0) res.test_best = evaluate(net, *test_set, cfg.batch);
  return res;
}

nlohmann::json aggregate_folds(const std::vector<FoldResult>& folds) {
  auto block = [&](bool best) {
    nlohmann::json out;
    const char* names[] = {"acc", "sen", "spe", "f1", "auc"};
    for (std::size_t m = 0; m < 5; ++m) {
      std::vector<std::optional<double>> vals;
      for (const FoldResult& f : folds) {
        const auto& r = best ? f.test_best : f.test_final;
        if (!r) {
          vals.push_back(std::nullopt);
          continue;
        }
        switch (m) {
          case 0: vals.push_back(r->metrics.acc); break;
          case 1: vals.push_back(r->metrics.sen); break;
          case 2: vals.push_back(r->metrics.spe); break;
          case 3: vals.push_back(r->metrics.f1); break;
          default: vals.push_back(r->auc); break;
        }
      }
      const MetricSummary s = summarize(vals);
      out[names[m]] = {{"mean", optional_json(s.mean)},
                       {"sd", optional_json(s.sd)},
                       {"defined", s.defined},
                       {"undefined", s.undefined}};
    }
    return out;
  };
  return {{"best", block(true)}, {"final", block(false)}};
}

nlohmann::json run_cross_validation(const model::SFNetConfig& model_cfg,
                                    const std::vector<data::VolumeRecord>& records,
                                    const data::FoldPlan& plan, const TrainConfig& cfg,
                                    const fs::path& out_dir, std::size_t parallel_folds) {
  cfg.validate();
  fs::create_directories(out_dir);
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), 0);
  const Dataset full = load_dataset(records, all);
  auto subset = [&](const std::vector<std::size_t>& idx) {
    Dataset d;
    for (std::size_t i : idx) d.add(full.volumes.at(i), full.labels.at(i), full.ids.at(i));
    return d;
  };
  const Dataset test = subset(plan.test);

  const std::size_t k = plan.folds.size();
  std::vector<FoldResult> results(k);
  std::vector<std::exception_ptr> errors(k);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&]() {
    for (std::size_t f = next++; f < k; f = next++) {
      try {
        const Dataset tr = subset(plan.folds[f].train);
        const Dataset va = subset(plan.folds[f].val);
        results[f] = train_fold(model_cfg, tr, va, &test, cfg, f, out_dir);
        std::lock_guard<std::mutex> lock(log_mu);
        std::cerr << "fold " << f << ": best epoch " << results[f].best_epoch << ", test acc "
                  << optional_csv(results[f].test_best->metrics.acc) << '\n';
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallel_folds, k));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  nlohmann::json folds = nlohmann::json::array();
  for (const FoldResult& r : results) folds.push_back(to_json(r));
  nlohmann::json report{{"model_config", model::to_json(model_cfg)},
                        {"train_config", to_json(cfg)},
                        {"fold_plan", data::to_json(plan)},
                        {"positive_label", 1},
                        {"folds", folds},
                        {"aggregate", aggregate_folds(results)}};
  std::ofstream out(out_dir / "report.json", std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + (out_dir / "report.json").string());
  out << report.dump(2) << '\n';
  return report;
}

}  // namespace sfnet::train
