#include "repq/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>
#include <utility>

#include "json.hpp"
#include "repq/errors.hpp"
#include "repq/scaler.hpp"
#include "repq/synth.hpp"

namespace repq {

namespace {

// Hand-rolled shuffle so plans and batch orders do not depend on the
// standard library's std::shuffle implementation.
void fisher_yates(std::vector<std::size_t>& v, std::mt19937_64 rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng() % i]);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

double row_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Eval-mode encoding of pre-standardised signals in bounded chunks; rows of
// the pooled matrix (and logits, when requested) are copied out so the tape
// for each chunk can be released immediately.
void encode_rows(const Model& model,
                 const std::vector<const SignalMatrix*>& sigs, bool with_cls,
                 std::vector<std::vector<double>>& pooled,
                 std::vector<std::vector<double>>& logits) {
  constexpr std::size_t kChunk = 64;
  pooled.assign(sigs.size(), {});
  if (with_cls) logits.assign(sigs.size(), {});
  for (std::size_t c0 = 0; c0 < sigs.size(); c0 += kChunk) {
    const std::size_t c1 = std::min(c0 + kChunk, sigs.size());
    std::vector<const SignalMatrix*> chunk(sigs.begin() + c0,
                                           sigs.begin() + c1);
    ForwardPass fp = model.forward(chunk, with_cls, nullptr);
    const Tensor& p = fp.tape->value(fp.pooled);
    for (std::size_t r = 0; r < chunk.size(); ++r)
      pooled[c0 + r].assign(p.data.begin() + r * p.cols,
                            p.data.begin() + (r + 1) * p.cols);
    if (with_cls) {
      const Tensor& lg = fp.tape->value(fp.logits);
      for (std::size_t r = 0; r < chunk.size(); ++r)
        logits[c0 + r].assign(lg.data.begin() + r * lg.cols,
                              lg.data.begin() + (r + 1) * lg.cols);
    }
  }
}

MetricSummary summarize(const std::vector<double>& y,
                        const std::vector<double>& y_hat) {
  MetricSummary s;
  s.mse = mse(y, y_hat);
  s.mae = mae(y, y_hat);
  s.r2 = r_squared(y, y_hat);
  s.pairs = y.size();
  return s;
}

// Mean squared similarity error over pairs whose endpoints are already
// standardised; used for the per-epoch validation score.
double pair_mse(const Model& model, const std::vector<SignalMatrix>& std_sigs,
                const std::vector<SimilarityPair>& pairs) {
  std::vector<std::size_t> uniq;
  uniq.reserve(pairs.size() * 2);
  for (const SimilarityPair& p : pairs) {
    uniq.push_back(p.signal_idx);
    uniq.push_back(p.anchor_idx);
  }
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::unordered_map<std::size_t, std::size_t> pos;
  std::vector<const SignalMatrix*> sigs;
  sigs.reserve(uniq.size());
  for (std::size_t i : uniq) {
    pos.emplace(i, sigs.size());
    sigs.push_back(&std_sigs[i]);
  }
  std::vector<std::vector<double>> pooled, logits;
  encode_rows(model, sigs, false, pooled, logits);
  double acc = 0.0;
  for (const SimilarityPair& p : pairs) {
    const double sim =
        row_cosine(pooled[pos.at(p.signal_idx)], pooled[pos.at(p.anchor_idx)]);
    acc += (sim - p.s) * (sim - p.s);
  }
  return acc / static_cast<double>(pairs.size());
}

}  // namespace

std::string to_string(SplitMode m) {
  return m == SplitMode::Loocv ? "loocv" : "standard";
}

SplitMode split_mode_from_string(const std::string& s) {
  if (s == "loocv") return SplitMode::Loocv;
  if (s == "standard") return SplitMode::Standard;
  throw ParamError("unknown split mode '" + s + "' (loocv|standard)");
}

SplitPlan split(const std::vector<LabeledSegment>& segments, SplitMode mode,
                std::uint64_t seed) {
  if (segments.empty()) throw ParamError("split: empty corpus");
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < segments.size(); ++i)
    by_subject[segments[i].segment.subject_id].push_back(i);

  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;

  if (mode == SplitMode::Loocv) {
    if (by_subject.size() < 2)
      throw ParamError("loocv needs at least 2 subjects, corpus has " +
                       std::to_string(by_subject.size()));
    std::size_t fold_idx = 0;
    for (const auto& [held, test_idxs] : by_subject) {
      SplitPlan::Fold fold;
      fold.held_out_subject = held;
      fold.test = test_idxs;  // already ascending
      std::mt19937_64 rng(derive_seed(seed, fold_idx));
      for (const auto& [subj, idxs] : by_subject) {
        if (subj == held) continue;
        std::vector<std::size_t> shuffled = idxs;
        fisher_yates(shuffled, rng);
        const std::size_t n_val = idxs.size() / 10;
        fold.val.insert(fold.val.end(), shuffled.begin(),
                        shuffled.begin() + n_val);
        fold.train.insert(fold.train.end(), shuffled.begin() + n_val,
                          shuffled.end());
      }
      std::sort(fold.train.begin(), fold.train.end());
      std::sort(fold.val.begin(), fold.val.end());
      plan.folds.push_back(std::move(fold));
      ++fold_idx;
    }
  } else {
    SplitPlan::Fold fold;
    std::mt19937_64 rng(derive_seed(seed, 0));
    for (const auto& [subj, idxs] : by_subject) {
      std::vector<std::size_t> shuffled = idxs;
      fisher_yates(shuffled, rng);
      const auto n = static_cast<double>(idxs.size());
      const auto n_train = static_cast<std::size_t>(std::llround(0.7 * n));
      const auto n_val = static_cast<std::size_t>(std::llround(0.1 * n));
      fold.train.insert(fold.train.end(), shuffled.begin(),
                        shuffled.begin() + n_train);
      fold.val.insert(fold.val.end(), shuffled.begin() + n_train,
                      shuffled.begin() + n_train + n_val);
      fold.test.insert(fold.test.end(), shuffled.begin() + n_train + n_val,
                       shuffled.end());
    }
    std::sort(fold.train.begin(), fold.train.end());
    std::sort(fold.val.begin(), fold.val.end());
    std::sort(fold.test.begin(), fold.test.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

void TrainConfig::check() const {
  if (batch_pairs < 1) throw ParamError("batch_pairs must be >= 1");
  if (!(lr > 0.0)) throw ParamError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ParamError("Adam betas must lie in [0,1)");
  if (!(adam_eps > 0.0)) throw ParamError("adam_eps must be positive");
  if (epochs < 1) throw ParamError("epochs must be >= 1");
  if (!(alpha >= 0.0)) throw ParamError("alpha must be >= 0");
  if (!(pair_fraction > 0.0 && pair_fraction <= 1.0))
    throw ParamError("pair_fraction must lie in (0,1]");
}

PairSets partition_pairs(const std::vector<SimilarityPair>& pairs,
                         const SplitPlan::Fold& fold) {
  enum : int { kNone = 0, kTrain = 1, kVal = 2, kTest = 3 };
  std::unordered_map<std::size_t, int> where;
  for (std::size_t i : fold.train) where[i] = kTrain;
  for (std::size_t i : fold.val) where[i] = kVal;
  for (std::size_t i : fold.test) where[i] = kTest;

  PairSets out;
  for (const SimilarityPair& p : pairs) {
    const auto ita = where.find(p.signal_idx);
    const auto itb = where.find(p.anchor_idx);
    const int wa = ita == where.end() ? kNone : ita->second;
    const int wb = itb == where.end() ? kNone : itb->second;
    if (wa == kNone || wb == kNone) continue;
    if (wa == kTrain && wb == kTrain) {
      out.train.push_back(p);
    } else if (wa != kTest && wb != kTest) {
      out.val.push_back(p);  // train/val mix with at least one val endpoint
    } else if (wa == kTest && wb == kTest) {
      out.test.push_back(p);
    }
    // Pairs straddling test and train/val are dropped: they are neither
    // trainable nor cleanly attributable to the held-out evaluation.
  }
  return out;
}

TrainResult train_fold(const std::vector<LabeledSegment>& segments,
                       const SplitPlan::Fold& fold, const ModelConfig& mcfg,
                       const TrainConfig& tcfg,
                       const MetricConfig& metric_cfg) {
  mcfg.check();
  tcfg.check();
  metric_cfg.check();
  if (fold.train.empty())
    throw ParamError("train_fold: fold has no training segments");

  const std::vector<SimilarityPair> all_pairs =
      build_pairs(segments, tcfg.metric, metric_cfg);
  PairSets sets = partition_pairs(all_pairs, fold);
  if (sets.train.empty())
    throw ParamError("train_fold: no within-subject training pairs");

  const bool with_cls = tcfg.alpha > 0.0;
  std::vector<int> cls(segments.size(), 0);
  if (with_cls) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      cls[i] = segments[i].label.rom.index;
      if (cls[i] < 0 || static_cast<std::size_t>(cls[i]) >= mcfg.num_classes)
        throw ParamError("segment '" + segments[i].id + "' has ROM class " +
                         std::to_string(cls[i]) + " outside num_classes=" +
                         std::to_string(mcfg.num_classes));
    }
  }

  std::vector<const SignalMatrix*> train_sigs;
  train_sigs.reserve(fold.train.size());
  for (std::size_t i : fold.train)
    train_sigs.push_back(&segments[i].segment.signal);
  const std::string source = fold.held_out_subject.empty()
                                 ? std::string("standard-train")
                                 : "loocv-hold-" + fold.held_out_subject;
  AxisScaler scaler = fit_scaler_segments(train_sigs, source);

  std::vector<SignalMatrix> std_sigs;
  std_sigs.reserve(segments.size());
  for (const LabeledSegment& seg : segments)
    std_sigs.push_back(apply_scaler(scaler, seg.segment.signal));

  Model model(mcfg, derive_seed(tcfg.seed, 17));
  model.scaler() = scaler;

  struct Moments {
    Tensor m, v;
  };
  std::map<std::string, Moments> adam;
  for (const auto& [name, t] : model.params().t)
    adam.emplace(name, Moments{Tensor(t.rows, t.cols), Tensor(t.rows, t.cols)});
  std::size_t step_count = 0;

  std::mt19937_64 dropout_rng(derive_seed(tcfg.seed, 777));
  const bool train_mode = mcfg.dropout > 0.0;

  TrainResult out;
  ModelParams best = model.params();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::vector<std::size_t> order(sets.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    fisher_yates(order, std::mt19937_64(derive_seed(tcfg.seed, 1000 + epoch)));
    const std::size_t take = std::clamp<std::size_t>(
        static_cast<std::size_t>(
            std::ceil(tcfg.pair_fraction * static_cast<double>(order.size()))),
        1, order.size());

    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    for (std::size_t b0 = 0; b0 < take; b0 += tcfg.batch_pairs) {
      const std::size_t b1 = std::min(b0 + tcfg.batch_pairs, take);
      const std::size_t batch_idx = b0 / tcfg.batch_pairs;

      std::vector<std::size_t> uniq;
      uniq.reserve(2 * (b1 - b0));
      for (std::size_t k = b0; k < b1; ++k) {
        uniq.push_back(sets.train[order[k]].signal_idx);
        uniq.push_back(sets.train[order[k]].anchor_idx);
      }
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      std::unordered_map<std::size_t, std::size_t> pos;
      std::vector<const SignalMatrix*> batch_sigs;
      batch_sigs.reserve(uniq.size());
      for (std::size_t i : uniq) {
        pos.emplace(i, batch_sigs.size());
        batch_sigs.push_back(&std_sigs[i]);
      }

      ForwardPass fp = model.forward(batch_sigs, with_cls,
                                     train_mode ? &dropout_rng : nullptr);
      Tape& tape = *fp.tape;
      std::vector<std::size_t> ia, ib;
      std::vector<double> lbl;
      ia.reserve(b1 - b0);
      ib.reserve(b1 - b0);
      lbl.reserve(b1 - b0);
      for (std::size_t k = b0; k < b1; ++k) {
        const SimilarityPair& p = sets.train[order[k]];
        ia.push_back(pos.at(p.signal_idx));
        ib.push_back(pos.at(p.anchor_idx));
        lbl.push_back(p.s);
      }
      const Tape::Id pa = tape.gather_rows(fp.pooled, ia);
      const Tape::Id pb = tape.gather_rows(fp.pooled, ib);
      const Tape::Id sims = tape.cosine_rows(pa, pb);
      const std::size_t n_pairs = lbl.size();
      const Tape::Id labels =
          tape.leaf(Tensor::from(n_pairs, 1, std::move(lbl)));
      const Tape::Id sim_mse =
          tape.mean_all(tape.square(tape.sub(sims, labels)));
      Tape::Id loss = sim_mse;
      if (with_cls) {
        std::vector<int> batch_cls;
        batch_cls.reserve(uniq.size());
        for (std::size_t i : uniq) batch_cls.push_back(cls[i]);
        const Tape::Id ce =
            tape.mean_all(tape.cross_entropy_rows(fp.logits, batch_cls));
        loss = tape.add(sim_mse, tape.scale(ce, tcfg.alpha));
      }

      const double loss_value = tape.value(loss).data[0];
      const std::string at = " at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_idx);
      if (!std::isfinite(loss_value))
        throw NumericError("training diverged: loss is not finite" + at);
      tape.backward(loss);

      ++step_count;
      const double bc1 = 1.0 - std::pow(tcfg.beta1, double(step_count));
      const double bc2 = 1.0 - std::pow(tcfg.beta2, double(step_count));
      for (const auto& [name, id] : fp.params) {
        if (!tape.has_grad(id)) continue;
        const Tensor& g = tape.grad(id);
        if (!g.all_finite())
          throw NumericError("training diverged: gradient for '" + name +
                             "' is not finite" + at);
        Moments& mo = adam.at(name);
        Tensor& p = model.params().t.at(name);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
          mo.m.data[i] = tcfg.beta1 * mo.m.data[i] +
                         (1.0 - tcfg.beta1) * g.data[i];
          mo.v.data[i] = tcfg.beta2 * mo.v.data[i] +
                         (1.0 - tcfg.beta2) * g.data[i] * g.data[i];
          const double m_hat = mo.m.data[i] / bc1;
          const double v_hat = mo.v.data[i] / bc2;
          p.data[i] -= tcfg.lr * m_hat / (std::sqrt(v_hat) + tcfg.adam_eps);
        }
      }
      loss_sum += loss_value * static_cast<double>(b1 - b0);
      loss_n += b1 - b0;
    }

    const double train_loss = loss_sum / static_cast<double>(loss_n);
    const double val =
        sets.val.empty() ? train_loss : pair_mse(model, std_sigs, sets.val);
    if (!std::isfinite(val))
      throw NumericError("training diverged: validation MSE is not finite at "
                         "epoch " +
                         std::to_string(epoch));
    out.history.push_back({epoch, train_loss, val});
    const std::size_t track_from = std::min(tcfg.min_epochs, tcfg.epochs - 1);
    if (epoch < track_from) continue;
    if (val < out.best_val_mse) {
      out.best_val_mse = val;
      out.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= tcfg.patience) {
      break;
    }
  }

  model.params() = std::move(best);
  out.model = std::move(model);
  return out;
}

void save_history_csv(const std::vector<EpochLog>& history,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "epoch,train_loss,val_mse\n";
  for (const EpochLog& log : history)
    out << log.epoch << ',' << format_double(log.train_loss) << ','
        << format_double(log.val_mse) << '\n';
}

double r_squared(const std::vector<double>& y,
                 const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size())
    throw ParamError("r_squared: length mismatch");
  if (y.size() < 2) throw ParamError("r_squared needs at least 2 points");
  const double mean =
      std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0)
    throw DataError("r_squared undefined for constant targets");
  return 1.0 - ss_res / ss_tot;
}

double mse(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) throw ParamError("mse: length mismatch");
  if (y.empty()) throw ParamError("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

double mae(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) throw ParamError("mae: length mismatch");
  if (y.empty()) throw ParamError("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += std::abs(y[i] - y_hat[i]);
  return acc / static_cast<double>(y.size());
}

std::vector<std::vector<std::size_t>> confusion(
    const std::vector<int>& y_true, const std::vector<int>& y_pred,
    std::size_t num_classes) {
  if (num_classes == 0) throw ParamError("confusion: num_classes must be > 0");
  if (y_true.size() != y_pred.size())
    throw ParamError("confusion: length mismatch");
  std::vector<std::vector<std::size_t>> counts(
      num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes)
      throw ParamError("confusion: label out of range at position " +
                       std::to_string(i));
    ++counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return counts;
}

double accuracy(const std::vector<std::vector<std::size_t>>& counts) {
  std::size_t total = 0, diag = 0;
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      total += counts[i][j];
      if (i == j) diag += counts[i][j];
    }
  if (total == 0) throw ParamError("accuracy: empty confusion matrix");
  return static_cast<double>(diag) / static_cast<double>(total);
}

MetricSummary score_pairs(const Model& model,
                          const std::vector<LabeledSegment>& segments,
                          const std::vector<SimilarityPair>& pairs) {
  if (pairs.empty()) throw ParamError("score_pairs: no pairs");
  std::vector<std::size_t> uniq;
  uniq.reserve(pairs.size() * 2);
  for (const SimilarityPair& p : pairs) {
    uniq.push_back(p.signal_idx);
    uniq.push_back(p.anchor_idx);
  }
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::unordered_map<std::size_t, std::size_t> pos;
  std::vector<SignalMatrix> std_sigs;
  std_sigs.reserve(uniq.size());
  for (std::size_t i : uniq) {
    pos.emplace(i, std_sigs.size());
    std_sigs.push_back(
        apply_scaler(model.scaler(), segments[i].segment.signal));
  }
  std::vector<const SignalMatrix*> sigs;
  sigs.reserve(std_sigs.size());
  for (const SignalMatrix& s : std_sigs) sigs.push_back(&s);

  std::vector<std::vector<double>> pooled, logits;
  encode_rows(model, sigs, false, pooled, logits);

  std::vector<double> y, y_hat;
  y.reserve(pairs.size());
  y_hat.reserve(pairs.size());
  for (const SimilarityPair& p : pairs) {
    y.push_back(p.s);
    y_hat.push_back(
        row_cosine(pooled[pos.at(p.signal_idx)], pooled[pos.at(p.anchor_idx)]));
  }
  return summarize(y, y_hat);
}

FoldReport evaluate_fold(const Model& model,
                         const std::vector<LabeledSegment>& segments,
                         const SplitPlan::Fold& fold,
                         const std::vector<SimilarityPair>& pairs,
                         bool with_classifier, std::size_t num_classes) {
  PairSets sets = partition_pairs(pairs, fold);
  if (sets.test.empty())
    throw ParamError("evaluate_fold: fold has no test pairs");

  FoldReport rep;
  rep.held_out_subject = fold.held_out_subject;

  std::unordered_map<std::size_t, std::size_t> pos;
  std::vector<SignalMatrix> std_sigs;
  std_sigs.reserve(fold.test.size());
  for (std::size_t i : fold.test) {
    pos.emplace(i, std_sigs.size());
    std_sigs.push_back(
        apply_scaler(model.scaler(), segments[i].segment.signal));
  }
  std::vector<const SignalMatrix*> sigs;
  sigs.reserve(std_sigs.size());
  for (const SignalMatrix& s : std_sigs) sigs.push_back(&s);

  std::vector<std::vector<double>> pooled, logits;
  encode_rows(model, sigs, with_classifier, pooled, logits);

  for (const SimilarityPair& p : sets.test) {
    rep.sim_true.push_back(p.s);
    rep.sim_pred.push_back(
        row_cosine(pooled[pos.at(p.signal_idx)], pooled[pos.at(p.anchor_idx)]));
  }
  rep.similarity = summarize(rep.sim_true, rep.sim_pred);

  if (with_classifier) {
    for (std::size_t i : fold.test) {
      const std::vector<double>& row = logits[pos.at(i)];
      const std::size_t arg = static_cast<std::size_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
      rep.class_true.push_back(segments[i].label.rom.index);
      rep.class_pred.push_back(static_cast<int>(arg));
    }
    rep.confusion = confusion(rep.class_true, rep.class_pred, num_classes);
    rep.accuracy = accuracy(rep.confusion);
  }
  return rep;
}

EvalReport run_eval(const std::vector<LabeledSegment>& segments,
                    const SplitPlan& plan, const ModelConfig& mcfg,
                    const TrainConfig& tcfg, const MetricConfig& metric_cfg,
                    int jobs) {
  if (plan.folds.empty()) throw ParamError("run_eval: empty split plan");
  const auto wall0 = std::chrono::steady_clock::now();
  const std::vector<SimilarityPair> pairs =
      build_pairs(segments, tcfg.metric, metric_cfg);
  const bool with_cls = tcfg.alpha > 0.0;

  EvalReport report;
  report.metric = tcfg.metric;
  report.mode = plan.mode;
  report.folds.resize(plan.folds.size());

  std::vector<std::exception_ptr> errors(plan.folds.size());
  const auto run_one = [&](std::size_t f) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      TrainConfig fold_cfg = tcfg;
      fold_cfg.seed = derive_seed(tcfg.seed, 50000 + f);
      TrainResult tr =
          train_fold(segments, plan.folds[f], mcfg, fold_cfg, metric_cfg);
      FoldReport fr = evaluate_fold(tr.model, segments, plan.folds[f], pairs,
                                    with_cls, mcfg.num_classes);
      fr.best_epoch = tr.best_epoch;
      fr.runtime_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      report.folds[f] = std::move(fr);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  };

  if (jobs > 1) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs)
#endif
    for (std::size_t f = 0; f < plan.folds.size(); ++f) run_one(f);
  } else {
    for (std::size_t f = 0; f < plan.folds.size(); ++f) run_one(f);
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  for (const FoldReport& fr : report.folds) {
    report.mean.mse += fr.similarity.mse;
    report.mean.mae += fr.similarity.mae;
    report.mean.r2 += fr.similarity.r2;
    report.mean.pairs += fr.similarity.pairs;
  }
  const auto n_folds = static_cast<double>(report.folds.size());
  report.mean.mse /= n_folds;
  report.mean.mae /= n_folds;
  report.mean.r2 /= n_folds;

  if (with_cls) {
    report.confusion_total.assign(mcfg.num_classes,
                                  std::vector<std::size_t>(mcfg.num_classes, 0));
    for (const FoldReport& fr : report.folds)
      for (std::size_t i = 0; i < fr.confusion.size(); ++i)
        for (std::size_t j = 0; j < fr.confusion[i].size(); ++j)
          report.confusion_total[i][j] += fr.confusion[i][j];
    report.accuracy_total = accuracy(report.confusion_total);
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0)
          .count();
  return report;
}

void save_report_json(const EvalReport& report,
                      const std::filesystem::path& path) {
  nlohmann::json j;
  j["metric"] = to_string(report.metric);
  j["mode"] = to_string(report.mode);
  j["mean"] = {{"mse", report.mean.mse},
               {"mae", report.mean.mae},
               {"r2", report.mean.r2},
               {"pairs", report.mean.pairs}};
  j["runtime_seconds"] = report.runtime_seconds;
  if (!report.confusion_total.empty()) {
    j["confusion"] = report.confusion_total;
    j["accuracy"] = report.accuracy_total;
  }
  nlohmann::json folds = nlohmann::json::array();
  for (const FoldReport& fr : report.folds) {
    nlohmann::json f;
    f["held_out_subject"] = fr.held_out_subject;
    f["mse"] = fr.similarity.mse;
    f["mae"] = fr.similarity.mae;
    f["r2"] = fr.similarity.r2;
    f["pairs"] = fr.similarity.pairs;
    f["best_epoch"] = fr.best_epoch;
    f["runtime_seconds"] = fr.runtime_seconds;
    if (!fr.confusion.empty()) f["accuracy"] = fr.accuracy;
    folds.push_back(std::move(f));
  }
  j["folds"] = std::move(folds);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_report_csv(const EvalReport& report,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const bool with_cls = !report.confusion_total.empty();
  out << "fold,held_out_subject,pairs,mse,mae,r2,accuracy\n";
  for (std::size_t f = 0; f < report.folds.size(); ++f) {
    const FoldReport& fr = report.folds[f];
    out << f << ',' << fr.held_out_subject << ',' << fr.similarity.pairs << ','
        << format_double(fr.similarity.mse) << ','
        << format_double(fr.similarity.mae) << ','
        << format_double(fr.similarity.r2) << ',';
    if (with_cls) out << format_double(fr.accuracy);
    out << '\n';
  }
  out << "mean,," << report.mean.pairs << ','
      << format_double(report.mean.mse) << ',' << format_double(report.mean.mae)
      << ',' << format_double(report.mean.r2) << ',';
  if (with_cls) out << format_double(report.accuracy_total);
  out << '\n';
}

void save_confusion_csv(const std::vector<std::vector<std::size_t>>& counts,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& row : counts) {
    for (std::size_t j = 0; j < row.size(); ++j)
      out << (j ? "," : "") << row[j];
    out << '\n';
  }
}

}  // namespace repq
