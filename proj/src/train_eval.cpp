#include "fineas/train_eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "fineas/adam.hpp"
#include "fineas/io_utils.hpp"
#include "fineas/rng.hpp"

namespace fineas::train {

double mse(const std::vector<float>& pred, const std::vector<float>& target) {
  if (pred.size() != target.size()) {
    raise(Errc::LengthMismatch, std::to_string(pred.size()) + " predictions vs " +
                                    std::to_string(target.size()) + " targets");
  }
  if (pred.empty()) raise(Errc::EmptyBatch, "mse over zero examples");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

EncodedSplit encode_split(const std::vector<NewsEvent>& events,
                          const tok::Vocab& vocab, int max_len) {
  EncodedSplit out;
  out.seqs.reserve(events.size());
  out.targets.reserve(events.size());
  for (const auto& e : events) {
    out.seqs.push_back(vocab.kind() == tok::VocabKind::Subword
                           ? tok::encode_subword(vocab, e.headline, max_len)
                           : tok::encode_word(vocab, e.headline, max_len));
    out.targets.push_back(static_cast<float>(e.sentiment));
  }
  return out;
}

namespace {

using num::TensorF;

// Minimal interface the epoch loop needs; implementations below cover
// full-graph training and frozen-feature head training.
class BatchForward {
 public:
  virtual ~BatchForward() = default;
  virtual int train_size() const = 0;
  virtual int val_size() const = 0;
  virtual const std::vector<float>& train_targets() const = 0;
  virtual const std::vector<float>& val_targets() const = 0;
  virtual TensorF forward_train(const std::vector<int>& idx,
                                Rng& dropout_rng) = 0;
  virtual std::vector<float> predict_val() = 0;
  virtual std::vector<TensorF> params() = 0;
};

TrainRecord train_loop(BatchForward& data, const TrainConfig& cfg) {
  cfg.validate();
  const int n = data.train_size();
  if (n == 0) raise(Errc::EmptySplit, "train split is empty");
  if (data.val_size() == 0) raise(Errc::EmptySplit, "validation split is empty");

  auto params = data.params();
  num::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  num::AdamState<float> adam(adam_cfg, params);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  EarlyStopper stopper(cfg.patience);
  TrainRecord record;
  std::vector<std::vector<float>> best_snapshot;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.shuffle_each_epoch) shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int end = std::min(n, start + cfg.batch_size);
      const std::vector<int> idx(order.begin() + start, order.begin() + end);
      const int bsize = end - start;

      num::zero_grads(params);
      double batch_loss = 0.0;
      try {
        TensorF pred = data.forward_train(idx, dropout_rng);
        std::vector<float> t(bsize);
        for (int i = 0; i < bsize; ++i) t[i] = data.train_targets()[idx[i]];
        auto target = TensorF::constant({bsize, 1}, std::move(t));
        auto diff = num::sub(pred, target);
        auto loss = num::mean_all(num::mul(diff, diff));
        batch_loss = loss.values()[0];
        num::backward(loss);
      } catch (const Error& e) {
        if (e.code() == Errc::NonFiniteValue) {
          raise(Errc::NonFiniteLoss,
                "epoch " + std::to_string(epoch) + ", batch at " +
                    std::to_string(start) + ": " + e.what());
        }
        throw;
      }
      if (!std::isfinite(batch_loss)) {
        raise(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch) +
                                       ", batch at " + std::to_string(start));
      }
      num::adam_step(params, adam);
      epoch_loss += batch_loss * bsize;
    }
    record.train_losses.push_back(epoch_loss / n);

    const double val_loss = mse(data.predict_val(), data.val_targets());
    if (!std::isfinite(val_loss)) {
      raise(Errc::NonFiniteLoss, "validation at epoch " + std::to_string(epoch));
    }
    record.val_losses.push_back(val_loss);

    const bool stop = stopper.record(val_loss);
    if (stopper.improved_at(epoch)) {
      best_snapshot.clear();
      for (const auto& p : params) best_snapshot.push_back(p.values());
    }
    if (stop) {
      record.stopped_early = true;
      break;
    }
  }

  record.best_epoch = stopper.best_epoch();
  for (size_t i = 0; i < params.size(); ++i) {
    params[i].mutable_values() = best_snapshot[i];
  }
  record.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return record;
}

using models::Batch;

Batch make_batch(const std::vector<tok::TokenSeq>& seqs,
                 const std::vector<int>& idx) {
  std::vector<tok::TokenSeq> rows;
  rows.reserve(idx.size());
  for (int i : idx) rows.push_back(seqs[i]);
  return Batch::from_seqs(rows);
}

template <class Model>
std::vector<float> predict_seqs(const Model& model,
                                const std::vector<tok::TokenSeq>& seqs,
                                int batch_size) {
  std::vector<float> out;
  out.reserve(seqs.size());
  for (size_t start = 0; start < seqs.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(seqs.size(), start + batch_size);
    std::vector<tok::TokenSeq> rows(seqs.begin() + start, seqs.begin() + end);
    const auto pred = model.predict(Batch::from_seqs(rows));
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

template <class Model>
class GraphAdapter : public BatchForward {
 public:
  GraphAdapter(Model& model, EncodedSplit train, EncodedSplit val,
               int eval_batch)
      : model_(model),
        train_(std::move(train)),
        val_(std::move(val)),
        eval_batch_(eval_batch) {}

  int train_size() const override { return static_cast<int>(train_.seqs.size()); }
  int val_size() const override { return static_cast<int>(val_.seqs.size()); }
  const std::vector<float>& train_targets() const override { return train_.targets; }
  const std::vector<float>& val_targets() const override { return val_.targets; }

  TensorF forward_train(const std::vector<int>& idx, Rng& dropout_rng) override {
    return model_.predict(make_batch(train_.seqs, idx), /*train=*/true,
                          &dropout_rng);
  }

  std::vector<float> predict_val() override {
    return predict_seqs(model_, val_.seqs, eval_batch_);
  }

  std::vector<TensorF> params() override { return model_.trainable_parameters(); }

 private:
  Model& model_;
  EncodedSplit train_, val_;
  int eval_batch_;
};

// Head training over cached (or imported) feature rows.
class FeatureAdapter : public BatchForward {
 public:
  FeatureAdapter(models::FineasEncoderModelF& model, int dim,
                 std::vector<float> train_features,
                 std::vector<float> train_targets,
                 std::vector<float> val_features, std::vector<float> val_targets,
                 int eval_batch)
      : model_(model),
        dim_(dim),
        train_features_(std::move(train_features)),
        train_targets_(std::move(train_targets)),
        val_features_(std::move(val_features)),
        val_targets_(std::move(val_targets)),
        eval_batch_(eval_batch) {}

  int train_size() const override {
    return static_cast<int>(train_targets_.size());
  }
  int val_size() const override { return static_cast<int>(val_targets_.size()); }
  const std::vector<float>& train_targets() const override { return train_targets_; }
  const std::vector<float>& val_targets() const override { return val_targets_; }

  TensorF forward_train(const std::vector<int>& idx, Rng&) override {
    return model_.head(gather(train_features_, idx));
  }

  std::vector<float> predict_val() override {
    std::vector<float> out;
    const int n = val_size();
    for (int start = 0; start < n; start += eval_batch_) {
      const int end = std::min(n, start + eval_batch_);
      std::vector<int> idx;
      for (int i = start; i < end; ++i) idx.push_back(i);
      const auto pred = model_.head(gather(val_features_, idx));
      out.insert(out.end(), pred.values().begin(), pred.values().end());
    }
    return out;
  }

  std::vector<TensorF> params() override {
    return {model_.head_weight(), model_.head_bias()};
  }

 private:
  TensorF gather(const std::vector<float>& rows, const std::vector<int>& idx) {
    std::vector<float> v;
    v.reserve(idx.size() * dim_);
    for (int i : idx) {
      const auto* src = rows.data() + static_cast<size_t>(i) * dim_;
      v.insert(v.end(), src, src + dim_);
    }
    return TensorF::constant({static_cast<int>(idx.size()), dim_}, std::move(v));
  }

  models::FineasEncoderModelF& model_;
  int dim_;
  std::vector<float> train_features_, train_targets_;
  std::vector<float> val_features_, val_targets_;
  int eval_batch_;
};

// Per-dimension standardization statistics over the training features.
// Head training runs in standardized space (raw frozen-encoder features
// can be badly conditioned for first-order optimizers) and the affine
// transform is folded back into the head afterwards, so the stored model
// is expressed over raw features and predict() is unaffected.
struct FeatureStats {
  std::vector<float> mean;
  std::vector<float> inv_std;
};

FeatureStats feature_stats(const std::vector<float>& features, int n, int d) {
  FeatureStats stats;
  stats.mean.assign(d, 0.0f);
  stats.inv_std.assign(d, 1.0f);
  for (int j = 0; j < d; ++j) {
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += features[static_cast<size_t>(i) * d + j];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dv = features[static_cast<size_t>(i) * d + j] - mu;
      var += dv * dv;
    }
    var /= n;
    stats.mean[j] = static_cast<float>(mu);
    const double sd = std::sqrt(var);
    if (sd > 1e-6) stats.inv_std[j] = static_cast<float>(1.0 / sd);
  }
  return stats;
}

std::vector<float> standardize(const std::vector<float>& features, int d,
                               const FeatureStats& stats) {
  std::vector<float> out(features.size());
  for (size_t i = 0; i < features.size(); ++i) {
    const size_t j = i % static_cast<size_t>(d);
    out[i] = (features[i] - stats.mean[j]) * stats.inv_std[j];
  }
  return out;
}

// tanh(w.(x-mu)*inv_std + b) == tanh((w*inv_std).x + (b - sum_j w_j*inv_std_j*mu_j))
void fold_standardization_into_head(models::FineasEncoderModelF& model,
                                    const FeatureStats& stats) {
  auto w = model.head_weight();
  auto b = model.head_bias();
  auto& wv = w.mutable_values();
  double shift = 0.0;
  for (size_t j = 0; j < wv.size(); ++j) {
    wv[j] *= stats.inv_std[j];
    shift += static_cast<double>(wv[j]) * stats.mean[j];
  }
  b.mutable_values()[0] = static_cast<float>(b.values()[0] - shift);
}

TrainRecord train_head_standardized(models::FineasEncoderModelF& model,
                                    const std::vector<float>& train_features,
                                    std::vector<float> train_targets,
                                    const std::vector<float>& val_features,
                                    std::vector<float> val_targets,
                                    const TrainConfig& cfg) {
  const int d = model.spec().d_model;
  const int n = static_cast<int>(train_targets.size());
  const auto stats = feature_stats(train_features, n, d);
  FeatureAdapter adapter(model, d, standardize(train_features, d, stats),
                         std::move(train_targets),
                         standardize(val_features, d, stats),
                         std::move(val_targets), cfg.batch_size);
  auto record = train_loop(adapter, cfg);
  fold_standardization_into_head(model, stats);
  return record;
}

std::vector<float> extract_features_from_seqs(
    const models::FineasEncoderModelF& model,
    const std::vector<tok::TokenSeq>& seqs, int batch_size) {
  std::vector<float> out;
  out.reserve(seqs.size() * static_cast<size_t>(model.spec().d_model));
  for (size_t start = 0; start < seqs.size();
       start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(seqs.size(), start + batch_size);
    std::vector<tok::TokenSeq> rows(seqs.begin() + start, seqs.begin() + end);
    const auto emb = model.embed(Batch::from_seqs(rows), /*train=*/false, nullptr);
    out.insert(out.end(), emb.values().begin(), emb.values().end());
  }
  return out;
}

}  // namespace

TrainRecord train_model(models::FineasEncoderModelF& model,
                        const tok::Vocab& vocab, const DatasetBundle& bundle,
                        const TrainConfig& cfg) {
  if (bundle.train.empty()) raise(Errc::EmptySplit, "train split is empty");
  if (bundle.validation.empty()) {
    raise(Errc::EmptySplit, "validation split is empty");
  }
  auto train_split = encode_split(bundle.train, vocab, model.spec().max_len);
  auto val_split = encode_split(bundle.validation, vocab, model.spec().max_len);

  if (model.frozen()) {
    const auto train_feats =
        extract_features_from_seqs(model, train_split.seqs, cfg.batch_size);
    const auto val_feats =
        extract_features_from_seqs(model, val_split.seqs, cfg.batch_size);
    return train_head_standardized(model, train_feats,
                                   std::move(train_split.targets), val_feats,
                                   std::move(val_split.targets), cfg);
  }

  GraphAdapter<models::FineasEncoderModelF> adapter(
      model, std::move(train_split), std::move(val_split), cfg.batch_size);
  return train_loop(adapter, cfg);
}

TrainRecord train_model(models::BiLstmModelF& model, const tok::Vocab& vocab,
                        const DatasetBundle& bundle, const TrainConfig& cfg) {
  if (bundle.train.empty()) raise(Errc::EmptySplit, "train split is empty");
  if (bundle.validation.empty()) {
    raise(Errc::EmptySplit, "validation split is empty");
  }
  GraphAdapter<models::BiLstmModelF> adapter(
      model, encode_split(bundle.train, vocab, model.spec().max_len),
      encode_split(bundle.validation, vocab, model.spec().max_len),
      cfg.batch_size);
  return train_loop(adapter, cfg);
}

TrainRecord train_head_on_features(models::FineasEncoderModelF& model,
                                   const std::vector<float>& train_features,
                                   const std::vector<float>& train_targets,
                                   const std::vector<float>& val_features,
                                   const std::vector<float>& val_targets,
                                   const TrainConfig& cfg) {
  return train_head_standardized(model, train_features, train_targets,
                                 val_features, val_targets, cfg);
}

std::vector<float> predict_events(const models::FineasEncoderModelF& model,
                                  const tok::Vocab& vocab,
                                  const std::vector<NewsEvent>& events,
                                  int batch_size) {
  return predict_seqs(model, encode_split(events, vocab, model.spec().max_len).seqs,
                      batch_size);
}

std::vector<float> predict_events(const models::BiLstmModelF& model,
                                  const tok::Vocab& vocab,
                                  const std::vector<NewsEvent>& events,
                                  int batch_size) {
  return predict_seqs(model, encode_split(events, vocab, model.spec().max_len).seqs,
                      batch_size);
}

namespace {

template <class Model>
double evaluate_impl(const Model& model, const tok::Vocab& vocab,
                     const std::vector<NewsEvent>& events, int batch_size) {
  if (events.empty()) raise(Errc::EmptySplit, "evaluate over zero events");
  const auto split = encode_split(events, vocab, model.spec().max_len);
  const auto pred = predict_seqs(model, split.seqs, batch_size);
  return mse(pred, split.targets);
}

}  // namespace

double evaluate(const models::FineasEncoderModelF& model,
                const tok::Vocab& vocab, const std::vector<NewsEvent>& events,
                int batch_size) {
  return evaluate_impl(model, vocab, events, batch_size);
}

double evaluate(const models::BiLstmModelF& model, const tok::Vocab& vocab,
                const std::vector<NewsEvent>& events, int batch_size) {
  return evaluate_impl(model, vocab, events, batch_size);
}

std::vector<float> extract_features(const models::FineasEncoderModelF& model,
                                    const tok::Vocab& vocab,
                                    const std::vector<NewsEvent>& events,
                                    int batch_size) {
  return extract_features_from_seqs(
      model, encode_split(events, vocab, model.spec().max_len).seqs, batch_size);
}

Histograms emit_histograms(const std::vector<NewsEvent>& events) {
  if (events.empty()) raise(Errc::EmptySplit, "histograms over zero events");
  Histograms h;

  std::map<std::string, size_t> company;
  int min_words = std::numeric_limits<int>::max();
  int max_words = 0;
  std::map<int, size_t> words;
  for (const auto& e : events) {
    ++company[e.entity_id];
    const int wc = static_cast<int>(tok::word_tokens(e.headline).size());
    ++words[wc];
    min_words = std::min(min_words, wc);
    max_words = std::max(max_words, wc);

    int bin = static_cast<int>(std::floor((e.sentiment + 1.0) / 0.05));
    bin = std::clamp(bin, 0, 39);
    ++h.sentiment[static_cast<size_t>(bin)];
  }

  h.company.assign(company.begin(), company.end());
  std::sort(h.company.begin(), h.company.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  for (int wc = min_words; wc <= max_words; ++wc) {
    const auto it = words.find(wc);
    h.word_counts.emplace_back(wc, it == words.end() ? 0 : it->second);
  }
  return h;
}

const char* arm_name(Arm arm) {
  switch (arm) {
    case Arm::FineasFrozen: return "fineas-frozen";
    case Arm::FineasFinetune: return "fineas-finetune";
    case Arm::BertFrozen: return "bert-frozen";
    case Arm::Bilstm: return "bilstm";
  }
  return "unknown";
}

Arm arm_from_name(const std::string& name) {
  for (Arm arm : {Arm::FineasFrozen, Arm::FineasFinetune, Arm::BertFrozen,
                  Arm::Bilstm}) {
    if (name == arm_name(arm)) return arm;
  }
  raise(Errc::ConfigError, "unknown arm '" + name + "'");
}

EvalReport run_experiment(
    const std::vector<std::pair<std::string, DatasetBundle>>& bundles,
    const std::vector<Arm>& arms, const ExperimentSettings& settings) {
  EvalReport report;
  report.config_hash = settings.config_hash;
  report.seed = settings.seed;

  for (const auto& [label, bundle] : bundles) {
    std::vector<std::string> corpus;
    corpus.reserve(bundle.train.size());
    for (const auto& e : bundle.train) corpus.push_back(e.headline);
    const auto subword_vocab =
        tok::train_subword_vocab(corpus, settings.subword_target_size);
    const auto word_vocab =
        tok::train_word_vocab(corpus, settings.word_vocab_size);

    std::vector<NewsEvent> in_sample = bundle.train;
    in_sample.insert(in_sample.end(), bundle.validation.begin(),
                     bundle.validation.end());
    in_sample.insert(in_sample.end(), bundle.test.begin(), bundle.test.end());
    report.histograms.emplace_back(label, emit_histograms(in_sample));
    if (!bundle.oos.empty()) {
      report.histograms.emplace_back(label + "-oos", emit_histograms(bundle.oos));
    }

    for (const Arm arm : arms) {
      const uint64_t cell_seed = derive_seed(
          settings.seed, fnv1a64(label + "/" + arm_name(arm)));
      TrainConfig cfg = settings.train;
      cfg.seed = cell_seed;

      ExperimentCell cell;
      cell.window = label;
      cell.arm = arm;

      if (arm == Arm::Bilstm) {
        auto spec = settings.bilstm;
        spec.vocab_size = word_vocab.size();
        spec.max_len = settings.max_len;
        models::BiLstmModelF model(spec, cell_seed);
        cell.record = train_model(model, word_vocab, bundle, cfg);
        cell.test_mse = evaluate(model, word_vocab, bundle.test, cfg.batch_size);
        cell.oos_mse = evaluate(model, word_vocab, bundle.oos, cfg.batch_size);
      } else {
        auto spec = settings.encoder;
        spec.vocab_size = subword_vocab.size();
        spec.max_len = settings.max_len;
        spec.pooling =
            arm == Arm::BertFrozen ? models::Pooling::Cls : models::Pooling::Mean;
        models::FineasEncoderModelF model(spec, cell_seed);
        if (arm != Arm::FineasFinetune) model.set_frozen(true);
        cell.record = train_model(model, subword_vocab, bundle, cfg);
        cell.test_mse =
            evaluate(model, subword_vocab, bundle.test, cfg.batch_size);
        cell.oos_mse = evaluate(model, subword_vocab, bundle.oos, cfg.batch_size);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace fineas::train
