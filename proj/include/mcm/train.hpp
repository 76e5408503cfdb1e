#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcm/adam.hpp"
#include "mcm/checkpoint.hpp"
#include "mcm/data.hpp"
#include "mcm/metrics.hpp"
#include "mcm/model.hpp"
#include "mcm/skipgram.hpp"

namespace mcm {

struct TrainConfig {
    std::size_t epochs = 100;
    double lr = 0.002;
    std::size_t batch_size = 64;
    std::size_t patience = 10;  // early stop on eval loss
    std::uint64_t seed = 42;
    double aux_weight = 1.0;
    std::size_t l_max = 60;
    std::size_t min_freq = 2;
    bool verbose = false;

    void validate() const {
        if (epochs < 1) throw error("train config: epochs must be >= 1");
        if (patience < 1) throw error("train config: patience must be >= 1");
        if (lr <= 0.0) throw error("train config: learning rate must be positive");
        if (batch_size < 1) throw error("train config: batch size must be >= 1");
    }
};

struct EpochLog {
    double train_loss = 0.0;
    double eval_loss = 0.0;
    Metrics eval_metrics;
    bool checkpointed = false;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    std::string stop_reason;  // "completed" or "early-stopped at epoch N"
    std::size_t best_epoch = 0;
    double best_metric = 0.0;
};

struct EvalResult {
    Metrics metrics;
    double loss = 0.0;
};

inline EvalResult evaluate_model(SequenceModel& model, const DatasetSplit& split,
                                 const Vocabulary& vocab, std::size_t batch_size,
                                 std::size_t l_max) {
    Rng unused(0, Stream::misc);
    std::vector<std::size_t> y_true, y_pred;
    double loss_sum = 0.0;
    std::size_t n = 0;
    Rng no_shuffle(0, Stream::misc);
    for (const auto& batch : make_batches(split, vocab, batch_size, l_max, false,
                                          no_shuffle)) {
        Tape tape;
        auto out = model.forward(tape, batch, Mode::Infer, unused);
        auto l = model.loss(tape, out, batch.labels);
        loss_sum += static_cast<double>(l.item()) * static_cast<double>(batch.batch);
        n += batch.batch;
        auto preds = predict(out);
        y_pred.insert(y_pred.end(), preds.begin(), preds.end());
        y_true.insert(y_true.end(), batch.labels.begin(), batch.labels.end());
    }
    EvalResult r;
    r.loss = loss_sum / static_cast<double>(n);
    r.metrics = compute_metrics(y_true, y_pred, kNumClasses);
    return r;
}

struct TrainResult {
    Checkpoint best;
    TrainLog log;
};

// Epoch loop with best-accuracy checkpointing and patience-based early
// stopping on the eval loss.
inline TrainResult train(SequenceModel& model, const DatasetSplit& train_split,
                         const DatasetSplit& eval_split, const Vocabulary& vocab,
                         const TrainConfig& cfg,
                         std::map<std::string, std::string> config_echo = {}) {
    cfg.validate();
    if (train_split.examples.empty() || eval_split.examples.empty())
        throw error("train: empty split");

    Adam optimizer(static_cast<float>(cfg.lr));
    for (const auto& [name, p] : model.named_parameters()) optimizer.add_param(p);

    Rng shuffle_rng(cfg.seed, Stream::shuffle);
    Rng dropout_master(cfg.seed, Stream::dropout);

    TrainResult result;
    double best_metric = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t no_improve = 0;
    result.log.stop_reason = "completed";

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng dropout_rng = dropout_master.fork(epoch);
        double train_loss = 0.0;
        std::size_t seen = 0;
        const auto batches = make_batches(train_split, vocab, cfg.batch_size,
                                          cfg.l_max, true, shuffle_rng);
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            try {
                Tape tape;
                auto out = model.forward(tape, batches[bi], Mode::Train, dropout_rng);
                auto loss = model.loss(tape, out, batches[bi].labels);
                train_loss += static_cast<double>(loss.item()) *
                              static_cast<double>(batches[bi].batch);
                seen += batches[bi].batch;
                optimizer.zero_grad();
                tape.backward(loss);
                optimizer.step();
            } catch (const numeric_error& e) {
                throw numeric_error("train: non-finite loss in epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(bi) + ": " + e.what());
            }
        }

        EpochLog el;
        el.train_loss = train_loss / static_cast<double>(seen);
        auto ev = evaluate_model(model, eval_split, vocab, cfg.batch_size, cfg.l_max);
        el.eval_loss = ev.loss;
        el.eval_metrics = ev.metrics;

        if (ev.metrics.accuracy > best_metric) {
            best_metric = ev.metrics.accuracy;
            el.checkpointed = true;
            result.log.best_epoch = epoch;
            result.log.best_metric = best_metric;
            result.best = snapshot(model, vocab, config_echo, &optimizer,
                                   static_cast<std::uint32_t>(epoch),
                                   ev.metrics.accuracy);
        }
        result.log.epochs.push_back(el);
        if (cfg.verbose) {
            std::ostringstream os;
            os << "epoch " << epoch << " train_loss " << std::fixed
               << std::setprecision(4) << el.train_loss << " eval_loss "
               << el.eval_loss << " eval_acc " << ev.metrics.accuracy
               << (el.checkpointed ? " *" : "");
            std::fputs((os.str() + "\n").c_str(), stderr);
        }

        if (ev.loss < best_loss) {
            best_loss = ev.loss;
            no_improve = 0;
        } else {
            ++no_improve;
            if (no_improve >= cfg.patience) {
                result.log.stop_reason =
                    "early-stopped at epoch " + std::to_string(epoch);
                break;
            }
        }
    }
    return result;
}

// ---- checkpoint restore ----

inline McMConfig mcm_config_from_echo(const std::map<std::string, std::string>& echo) {
    McMConfig cfg;
    auto get = [&](const char* k, std::size_t fallback) -> std::size_t {
        auto it = echo.find(k);
        return it == echo.end() ? fallback : static_cast<std::size_t>(std::stoul(it->second));
    };
    cfg.filters = get("filters", cfg.filters);
    cfg.kernel1 = get("kernel1", cfg.kernel1);
    cfg.kernel2 = get("kernel2", cfg.kernel2);
    cfg.lstm_units = get("lstm_units", cfg.lstm_units);
    cfg.dense1 = get("dense1", cfg.dense1);
    cfg.dense2 = get("dense2", cfg.dense2);
    cfg.disc_dense1 = get("disc_dense1", cfg.disc_dense1);
    cfg.disc_dense2 = get("disc_dense2", cfg.disc_dense2);
    auto it = echo.find("dropout");
    if (it != echo.end()) cfg.dropout = std::stod(it->second);
    it = echo.find("lambda");
    if (it != echo.end()) cfg.aux_weight = std::stod(it->second);
    return cfg;
}

struct RestoredModel {
    std::unique_ptr<SequenceModel> model;
    Vocabulary vocab;
    McMConfig cfg;
    std::string kind;
};

inline RestoredModel restore_model(const Checkpoint& c) {
    RestoredModel r;
    r.vocab = vocab_from_checkpoint(c);
    r.cfg = mcm_config_from_echo(c.config);
    auto it = c.config.find("model");
    r.kind = it == c.config.end() ? "mcm" : it->second;
    const bool finetune = [&] {
        auto f = c.config.find("finetune");
        return f != c.config.end() && (f->second == "true" || f->second == "1");
    }();
    // embedding dimension from the stored table
    std::size_t dim = 0;
    const std::size_t v = r.vocab.size();
    for (const auto& [name, sv] : c.tensors)
        if (name == "embedding.table") dim = sv.first[1];
    if (dim == 0)
        for (const auto& [name, buf] : c.buffers)
            if (name == "embedding.frozen") dim = buf.size() / v;
    if (dim == 0) throw error("checkpoint: no embedding table stored");
    EmbeddingMatrix emb;
    emb.dim = dim;
    emb.trainable = finetune;
    emb.table = Tensor::zeros({v, dim}, finetune);
    r.model = build_model(r.kind, r.cfg, emb, Rng(0, Stream::init));
    restore_into(*r.model, c);
    return r;
}

// ---- grid search ----

struct GridCell {
    std::pair<std::size_t, std::size_t> kernels{1, 2};
    double dropout = 0.5;
    std::string optimizer = "adam";
    double lr = 0.002;

    std::string id() const {
        std::ostringstream os;
        os << "k" << kernels.first << "-" << kernels.second << "_d" << dropout
           << "_" << optimizer << "_lr" << lr;
        return os.str();
    }
};

struct GridResult {
    GridCell best;
    std::vector<std::pair<GridCell, double>> scores;  // validation accuracy
};

// Trains one McM per cell on an 80/20 re-split of the training data, with
// random embeddings and no finetuning, and picks the best validation
// accuracy.
inline GridResult grid_search(const std::vector<GridCell>& grid,
                              const DatasetSplit& train_split, const McMConfig& base,
                              const TrainConfig& tcfg, std::size_t embedding_dim = 300) {
    if (grid.empty()) throw error("grid_search: empty grid");
    Rng split_rng(tcfg.seed, Stream::split);
    auto [fit, val] = stratified_split(train_split.examples, 0.2, split_rng);
    fit.role = SplitRole::Train;
    val.role = SplitRole::Validation;
    const auto vocab = build_vocab(fit, tcfg.min_freq);

    GridResult result;
    double best_acc = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& cell = grid[i];
        if (cell.optimizer != "adam")
            throw error("grid_search: unsupported optimizer \"" + cell.optimizer + "\"");
        McMConfig cfg = base;
        cfg.kernel1 = cell.kernels.first;
        cfg.kernel2 = cell.kernels.second;
        cfg.dropout = cell.dropout;
        TrainConfig ct = tcfg;
        ct.lr = cell.lr;
        ct.seed = Rng(tcfg.seed, Stream::misc).fork(i).seed();
        Rng emb_rng(ct.seed, Stream::init);
        auto emb = init_random(vocab, embedding_dim, emb_rng, /*trainable=*/false);
        McMModel model(cfg, emb.table, false, Rng(ct.seed, Stream::init).fork(1));
        auto tr = train(model, fit, val, vocab, ct);
        const double acc = tr.log.best_metric;
        result.scores.emplace_back(cell, acc);
        if (acc > best_acc) {
            best_acc = acc;
            result.best = cell;
        }
    }
    return result;
}

inline std::vector<GridCell> default_grid() {
    std::vector<GridCell> g;
    for (auto k : {std::pair<std::size_t, std::size_t>{1, 2}, {2, 3}})
        for (double d : {0.3, 0.5})
            for (double lr : {0.002, 0.001}) g.push_back({k, d, "adam", lr});
    return g;
}

// ---- experiment matrix ----

struct MatrixCell {
    std::string model;      // mcm | convnet | attention_lstm | simpleconv | embedding_probe
    std::string embedding;  // random | char-hash | multilingual | pretrained | (probe: char-hash)
    bool finetune = false;

    std::string id() const {
        return model + "/" + embedding + "/" + (finetune ? "finetune" : "frozen");
    }
};

struct MatrixRow {
    MatrixCell cell;
    bool ok = false;
    bool skipped = false;
    std::string error_message;
    Metrics metrics;
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
};

// The default 14-cell layout: the embedding probe, the three baselines
// crossed with {random, char-hash} x {frozen, finetuned}, and McM with
// finetuned random embeddings.
inline std::vector<MatrixCell> default_matrix_cells() {
    std::vector<MatrixCell> cells;
    cells.push_back({"embedding_probe", "char-hash", false});
    for (const std::string m : {"convnet", "attention_lstm", "simpleconv"})
        for (const std::string e : {"random", "char-hash"})
            for (bool f : {false, true}) cells.push_back({m, e, f});
    cells.push_back({"mcm", "random", true});
    return cells;
}

struct MatrixDeps {
    const DatasetSplit* train = nullptr;
    const DatasetSplit* eval = nullptr;
    const Vocabulary* vocab = nullptr;
    std::string embedding_file;  // for kinds pretrained / multilingual
    std::size_t random_dim = 300;
    std::size_t char_hash_dim = 300;
};

inline EmbeddingMatrix make_embedding_for(const std::string& kind, bool finetune,
                                          const MatrixDeps& deps, std::uint64_t seed) {
    Rng rng(seed, Stream::init);
    if (kind == "random")
        return init_random(*deps.vocab, deps.random_dim, rng, finetune);
    if (kind == "char-hash")
        return init_char_hash(*deps.vocab, deps.char_hash_dim, seed, finetune);
    if (kind == "pretrained" || kind == "multilingual") {
        if (deps.embedding_file.empty())
            throw error("matrix: embedding kind \"" + kind +
                        "\" needs an embedding file");
        auto m = load_pretrained(deps.embedding_file, *deps.vocab, finetune, seed);
        m.kind = kind == "multilingual" ? EmbeddingKind::Multilingual
                                        : EmbeddingKind::Pretrained;
        return m;
    }
    throw error("matrix: unknown embedding kind \"" + kind + "\"");
}

// Runs every cell; a failing cell is recorded and the matrix continues.
inline std::vector<MatrixRow> experiment_matrix(
    const std::vector<MatrixCell>& cells, const MatrixDeps& deps, const McMConfig& base,
    const TrainConfig& tcfg, const std::set<std::string>* completed = nullptr,
    const std::function<void(const MatrixRow&)>& on_cell = nullptr) {
    std::vector<MatrixRow> rows;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        MatrixRow row;
        row.cell = cells[i];
        if (completed && completed->count(cells[i].id())) {
            row.skipped = true;
            rows.push_back(row);
            if (on_cell) on_cell(row);
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            McMConfig cfg = base;
            TrainConfig ct = tcfg;
            ct.seed = Rng(tcfg.seed, Stream::misc).fork(1000 + i).seed();
            auto emb = make_embedding_for(cells[i].embedding, cells[i].finetune, deps,
                                          ct.seed);
            auto model = build_model(cells[i].model, cfg, emb, Rng(ct.seed, Stream::init));
            const std::map<std::string, std::string> echo{
                {"model", cells[i].model},
                {"embedding", cells[i].embedding},
                {"finetune", cells[i].finetune ? "true" : "false"},
                {"filters", std::to_string(cfg.filters)},
                {"kernel1", std::to_string(cfg.kernel1)},
                {"kernel2", std::to_string(cfg.kernel2)},
                {"lstm_units", std::to_string(cfg.lstm_units)},
                {"dense1", std::to_string(cfg.dense1)},
                {"dense2", std::to_string(cfg.dense2)},
                {"disc_dense1", std::to_string(cfg.disc_dense1)},
                {"disc_dense2", std::to_string(cfg.disc_dense2)},
                {"dropout", std::to_string(cfg.dropout)},
                {"lambda", std::to_string(cfg.aux_weight)},
            };
            auto tr = train(*model, *deps.train, *deps.eval, *deps.vocab, ct, echo);
            auto restored = restore_model(tr.best);
            auto ev = evaluate_model(*restored.model, *deps.eval, restored.vocab,
                                     ct.batch_size, ct.l_max);
            row.ok = true;
            row.metrics = ev.metrics;
            row.best_epoch = tr.log.best_epoch;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error_message = e.what();
        }
        row.wall_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0)
                               .count();
        rows.push_back(row);
        if (on_cell) on_cell(row);
    }
    return rows;
}

// ---- result rendering ----

inline std::string matrix_csv(const std::vector<MatrixRow>& rows) {
    std::ostringstream os;
    os << "model,embedding,finetune,accuracy,precision,recall,f1,best_epoch,"
          "wall_seconds\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        os << r.cell.model << ',' << r.cell.embedding << ','
           << (r.cell.finetune ? "true" : "false") << ',';
        if (r.ok)
            os << r.metrics.accuracy << ',' << r.metrics.macro_precision << ','
               << r.metrics.macro_recall << ',' << r.metrics.macro_f1 << ','
               << r.best_epoch << ',' << std::setprecision(1) << r.wall_seconds
               << std::setprecision(4);
        else
            os << (r.skipped ? "skipped" : "failed") << ",,,,,";
        os << '\n';
    }
    return os.str();
}

// Aligned text table: one row per model x embedding, metric columns grouped
// by finetune mode.
inline std::string matrix_table(const std::vector<MatrixRow>& rows) {
    struct Key {
        std::string model, embedding;
        bool operator<(const Key& o) const {
            if (model != o.model) return model < o.model;
            return embedding < o.embedding;
        }
    };
    std::map<Key, std::array<const MatrixRow*, 2>> grouped;
    std::vector<Key> order;
    for (const auto& r : rows) {
        Key k{r.cell.model, r.cell.embedding};
        if (!grouped.count(k)) order.push_back(k);
        grouped[k][r.cell.finetune ? 1 : 0] = &r;
    }
    std::ostringstream os;
    os << std::left << std::setw(16) << "Model" << std::setw(14) << "Embedding"
       << "| Without finetuning            | With finetuning\n";
    os << std::setw(30) << "" << "| Acc    Prec   Rec    F1      | Acc    Prec   "
          "Rec    F1\n";
    os << std::string(30, '-') << "+" << std::string(31, '-') << "+"
       << std::string(28, '-') << '\n';
    auto cellstr = [](const MatrixRow* r) {
        if (!r) return std::string("  -      -      -      -     ");
        if (!r->ok) return std::string(r->skipped ? " skip                        "
                                                  : " fail                        ");
        std::ostringstream c;
        c << std::fixed << std::setprecision(2) << "  " << r->metrics.accuracy
          << "   " << r->metrics.macro_precision << "   " << r->metrics.macro_recall
          << "   " << r->metrics.macro_f1 << "  ";
        return c.str();
    };
    for (const auto& k : order) {
        os << std::left << std::setw(16) << k.model << std::setw(14) << k.embedding
           << "|" << cellstr(grouped[k][0]) << " |" << cellstr(grouped[k][1]) << '\n';
    }
    return os.str();
}

}  // namespace mcm
