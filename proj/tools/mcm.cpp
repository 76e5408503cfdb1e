// Command-line surface for the sentiment-classification toolkit:
// preprocessing, splitting, embedding training, model training and
// evaluation, grid search, the full experiment matrix, and prediction.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mcm/mcm.hpp"

namespace fs = std::filesystem;
using namespace mcm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;    // config / data / usage errors
constexpr int kExitNumeric = 3;  // runtime numerical failure

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 42;
    int jobs = 1;
    std::string out_dir;
    bool honest_validation = false;
};

RunConfig resolve_config(const GlobalOpts& g,
                         const std::map<std::string, std::string>& flag_values) {
    RunConfig cfg;
    for (const auto& [k, v] : flag_values) cfg.set(k, v);
    if (!g.config_path.empty())
        cfg.merge_defaults_from(RunConfig::from_file(g.config_path));
    if (!cfg.has("seed")) cfg.set("seed", std::to_string(g.seed));
    if (g.honest_validation) cfg.set("honest_validation", "true");
    return cfg;
}

// Run directory: --out when given, otherwise runs/<command>-<stamp>-<seed>.
fs::path make_run_dir(const GlobalOpts& g, const std::string& command,
                      std::uint64_t seed) {
    fs::path dir;
    if (!g.out_dir.empty()) {
        dir = g.out_dir;
    } else {
        const auto now = std::chrono::system_clock::to_time_t(
            std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
        dir = fs::path("runs") /
              (command + "-" + stamp + "-seed" + std::to_string(seed));
    }
    fs::create_directories(dir);
    return dir;
}

void print_class_stats(const ClassStats& st) {
    std::cout << "class balance:";
    for (const auto& [k, v] : st.class_pct)
        std::cout << "  " << k << " " << std::fixed << std::setprecision(2) << v
                  << "%";
    std::cout << "\n";
    if (!st.language_pct.empty()) {
        std::cout << "language mix: ";
        for (const auto& [k, v] : st.language_pct)
            std::cout << "  " << k << " " << std::fixed << std::setprecision(2) << v
                      << "%";
        std::cout << "\n";
    }
}

void print_metrics(const Metrics& m) {
    std::cout << std::fixed << std::setprecision(4) << "accuracy  " << m.accuracy
              << "\nmacro precision " << m.macro_precision << "\nmacro recall    "
              << m.macro_recall << "\nmacro f1        " << m.macro_f1 << "\n";
    std::cout << "confusion (rows = true, cols = predicted):\n";
    for (std::size_t t = 0; t < m.classes; ++t) {
        for (std::size_t p = 0; p < m.classes; ++p)
            std::cout << std::setw(8) << m.confusion_at(t, p);
        std::cout << "\n";
    }
}

McMConfig mcm_config_from(const RunConfig& cfg) {
    McMConfig m;
    m.filters = static_cast<std::size_t>(cfg.get_long("filters", 300));
    m.kernel1 = static_cast<std::size_t>(cfg.get_long("kernel1", 1));
    m.kernel2 = static_cast<std::size_t>(cfg.get_long("kernel2", 2));
    m.lstm_units = static_cast<std::size_t>(cfg.get_long("lstm_units", 300));
    m.dense1 = static_cast<std::size_t>(cfg.get_long("dense1", 128));
    m.dense2 = static_cast<std::size_t>(cfg.get_long("dense2", 64));
    m.disc_dense1 = static_cast<std::size_t>(cfg.get_long("disc_dense1", 128));
    m.disc_dense2 = static_cast<std::size_t>(cfg.get_long("disc_dense2", 64));
    m.dropout = cfg.get_double("dropout", 0.5);
    m.aux_weight = cfg.get_double("lambda", 1.0);
    m.validate();
    return m;
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    t.epochs = static_cast<std::size_t>(cfg.get_long("epochs", 100));
    t.lr = cfg.get_double("lr", 0.002);
    t.batch_size = static_cast<std::size_t>(cfg.get_long("batch_size", 64));
    t.patience = static_cast<std::size_t>(cfg.get_long("patience", 10));
    t.seed = static_cast<std::uint64_t>(cfg.get_long("seed", 42));
    t.aux_weight = cfg.get_double("lambda", 1.0);
    t.l_max = static_cast<std::size_t>(cfg.get_long("l_max", 60));
    t.min_freq = static_cast<std::size_t>(cfg.get_long("min_freq", 2));
    t.validate();
    return t;
}

struct LoadedData {
    DatasetSplit train, eval;
    Vocabulary vocab;
    bool honest_validation = false;
};

// Train/eval data per config: either explicit train_data/test_data files
// (pre-made splits), or a single data file split 80-20 here. With
// honest_validation, checkpoint selection runs on a held-out slice of the
// training data instead of the test split.
LoadedData load_training_data(const RunConfig& cfg, const TrainConfig& tcfg) {
    LoadedData d;
    if (cfg.has("train_data")) {
        d.train.examples = preprocess(load_dataset(cfg.get("train_data")));
        d.train.role = SplitRole::Train;
        if (!cfg.has("test_data"))
            throw error("config: train_data given without test_data");
        d.eval.examples = preprocess(load_dataset(cfg.get("test_data")));
        d.eval.role = SplitRole::Test;
    } else if (cfg.has("data")) {
        auto all = preprocess(load_dataset(cfg.get("data")));
        Rng split_rng(tcfg.seed, Stream::split);
        auto [tr, te] =
            stratified_split(all, cfg.get_double("test_fraction", 0.2), split_rng);
        d.train = std::move(tr);
        d.eval = std::move(te);
    } else {
        throw error("config: set data= or train_data=/test_data=");
    }
    if (cfg.get_bool("honest_validation", false)) {
        Rng val_rng(tcfg.seed, Stream::split);
        auto [fit, val] = stratified_split(d.train.examples, 0.2, val_rng);
        d.train = std::move(fit);
        d.eval = std::move(val);
        d.eval.role = SplitRole::Validation;
        d.honest_validation = true;
    }
    d.vocab = build_vocab(d.train, tcfg.min_freq);
    return d;
}

EmbeddingMatrix embedding_from(const RunConfig& cfg, const Vocabulary& vocab,
                               std::uint64_t seed) {
    const std::string kind = cfg.get("embedding", "random");
    const bool finetune = cfg.get_bool("finetune", true);
    const auto dim = static_cast<std::size_t>(cfg.get_long("dim", 300));
    if (kind == "random") {
        Rng rng(seed, Stream::init);
        return init_random(vocab, dim, rng, finetune);
    }
    if (kind == "char-hash") return init_char_hash(vocab, dim, seed, finetune);
    if (kind == "pretrained" || kind == "multilingual") {
        if (!cfg.has("embedding_file"))
            throw error("config: embedding=" + kind + " needs embedding_file=");
        auto m = load_pretrained(cfg.get("embedding_file"), vocab, finetune, seed);
        m.kind = kind == "multilingual" ? EmbeddingKind::Multilingual
                                        : EmbeddingKind::Pretrained;
        std::cout << "embedding coverage: " << std::fixed << std::setprecision(3)
                  << m.coverage << "\n";
        return m;
    }
    throw error("config: unknown embedding kind \"" + kind +
                "\"; valid: random, char-hash, pretrained, multilingual");
}

std::map<std::string, std::string> echo_from(const RunConfig& cfg) {
    std::map<std::string, std::string> echo(cfg.values().begin(), cfg.values().end());
    if (!echo.count("model")) echo["model"] = "mcm";
    if (!echo.count("embedding")) echo["embedding"] = "random";
    if (!echo.count("finetune")) echo["finetune"] = "true";
    return echo;
}

void write_train_log(const fs::path& path, const TrainLog& log) {
    std::ofstream os(path);
    os << "epoch\ttrain_loss\teval_loss\teval_accuracy\tmacro_f1\tcheckpointed\n";
    os << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < log.epochs.size(); ++i) {
        const auto& e = log.epochs[i];
        os << i + 1 << '\t' << e.train_loss << '\t' << e.eval_loss << '\t'
           << e.eval_metrics.accuracy << '\t' << e.eval_metrics.macro_f1 << '\t'
           << (e.checkpointed ? 1 : 0) << '\n';
    }
    os << "# " << log.stop_reason << "; best epoch " << log.best_epoch << '\n';
}

// ---- subcommands ----

int cmd_preprocess(const std::string& in, const std::string& out) {
    auto raw = load_dataset(in);
    PreprocessStats st;
    auto cleaned = preprocess(raw, &st);
    save_dataset(out, cleaned);
    std::cout << "kept " << st.kept << " records, dropped "
              << st.dropped_single_token << " single-token records\n";
    if (cleaned.empty()) {
        std::cout << "warning: no records survived preprocessing\n";
        return kExitOk;
    }
    DatasetSplit split;
    split.examples = cleaned;
    print_class_stats(class_stats(split));
    return kExitOk;
}

int cmd_split(const std::string& in, const std::string& out_train,
              const std::string& out_test, double test_fraction,
              std::uint64_t seed) {
    auto examples = load_dataset(in);
    Rng rng(seed, Stream::split);
    auto [train, test] = stratified_split(examples, test_fraction, rng);
    save_dataset(out_train, train.examples);
    save_dataset(out_test, test.examples);
    std::cout << "train " << train.size() << " examples, test " << test.size()
              << " examples\n";
    return kExitOk;
}

int cmd_embed_train(const std::vector<std::string>& corpus_paths,
                    const RunConfig& cfg, const std::string& out_path) {
    SkipGramConfig sg;
    sg.dim = static_cast<std::size_t>(cfg.get_long("dim", 300));
    sg.window = static_cast<std::size_t>(cfg.get_long("window", 5));
    sg.negatives = static_cast<std::size_t>(cfg.get_long("negatives", 5));
    sg.iterations = static_cast<std::size_t>(cfg.get_long("iterations", 500000));
    sg.min_freq = static_cast<std::size_t>(cfg.get_long("min_freq", 2));
    const auto seed = static_cast<std::uint64_t>(cfg.get_long("seed", 42));

    std::vector<std::vector<std::string>> sentences;
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t total_tokens = 0;
    for (const auto& p : corpus_paths) {
        std::ifstream in(p);
        if (!in) throw error("embed-train: cannot open " + p);
        std::string line;
        while (std::getline(in, line)) {
            for (char& c : line)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            auto toks = tokenize(line);
            if (toks.empty()) continue;
            total_tokens += toks.size();
            for (const auto& t : toks) ++counts[t];
            sentences.push_back(std::move(toks));
        }
    }
    if (sentences.empty()) throw error("embed-train: empty corpus");
    auto vocab = Vocabulary::build(counts, sg.min_freq);
    std::cout << "corpus: " << total_tokens << " tokens, vocabulary "
              << vocab.size() - 2 << " types (min_freq " << sg.min_freq << ")\n";

    auto result = train_skipgram(sentences, vocab, sg, Rng(seed, Stream::misc));
    save_embeddings(out_path, vocab, result.embeddings);
    std::cout << "wrote " << out_path << " (" << vocab.size() - 2 << " x " << sg.dim
              << ")\n";

    // nearest neighbors of the most frequent tokens
    std::vector<std::pair<std::size_t, std::string>> freq;
    for (const auto& [t, n] : counts)
        if (vocab.contains(t)) freq.emplace_back(n, t);
    std::sort(freq.rbegin(), freq.rend());
    const auto& table = result.embeddings.table.data();
    const std::size_t d = sg.dim;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, freq.size()); ++i) {
        const std::size_t qi = vocab.lookup(freq[i].second);
        std::vector<std::pair<double, std::string>> sims;
        for (std::size_t r = 2; r < vocab.size(); ++r) {
            if (r == qi) continue;
            sims.emplace_back(cosine(table.data() + qi * d, table.data() + r * d, d),
                              vocab.token(r));
        }
        std::sort(sims.rbegin(), sims.rend());
        std::cout << "neighbors(" << freq[i].second << "):";
        for (std::size_t k = 0; k < std::min<std::size_t>(3, sims.size()); ++k)
            std::cout << " " << sims[k].second << "(" << std::fixed
                      << std::setprecision(3) << sims[k].first << ")";
        std::cout << "\n";
    }
    return kExitOk;
}

TrainConfig cfg_verbose(TrainConfig t) {
    t.verbose = true;
    return t;
}

int cmd_train(const GlobalOpts& g, const RunConfig& cfg) {
    const auto tcfg_base = train_config_from(cfg);
    auto tcfg = tcfg_base;
    const auto run_dir = make_run_dir(g, "train", tcfg.seed);
    auto data = load_training_data(cfg, tcfg);
    std::cout << "train " << data.train.size() << " examples, eval "
              << data.eval.size() << " examples"
              << (data.honest_validation ? " (held-out validation)" : "")
              << ", vocabulary " << data.vocab.size() << "\n";

    auto emb = embedding_from(cfg, data.vocab, tcfg.seed);
    const std::string kind = cfg.get("model", "mcm");
    auto model = build_model(kind, mcm_config_from(cfg), emb,
                             Rng(tcfg.seed, Stream::init));

    cfg.save((run_dir / "config.resolved").string());
    auto result = train(*model, data.train, data.eval, data.vocab, cfg_verbose(tcfg),
                        echo_from(cfg));
    save_checkpoint((run_dir / "checkpoint.bin").string(), result.best);
    write_train_log(run_dir / "trainlog.tsv", result.log);

    std::cout << result.log.stop_reason << "; best epoch " << result.log.best_epoch
              << "\n";
    auto restored = restore_model(result.best);
    auto ev = evaluate_model(*restored.model, data.eval, restored.vocab,
                             tcfg.batch_size, tcfg.l_max);
    print_metrics(ev.metrics);
    std::cout << "artifacts in " << run_dir.string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_path,
                 std::size_t batch_size) {
    auto ckpt = load_checkpoint(checkpoint_path);
    auto restored = restore_model(ckpt);
    DatasetSplit split;
    split.examples = preprocess(load_dataset(data_path));
    split.role = SplitRole::Test;
    auto ev = evaluate_model(*restored.model, split, restored.vocab, batch_size, 60);
    print_metrics(ev.metrics);
    return kExitOk;
}

int cmd_grid_search(const GlobalOpts& g, const RunConfig& cfg) {
    auto tcfg = train_config_from(cfg);
    auto data = load_training_data(cfg, tcfg);
    auto result = grid_search(default_grid(), data.train, mcm_config_from(cfg), tcfg,
                              static_cast<std::size_t>(cfg.get_long("dim", 300)));
    std::cout << "cell\tval_accuracy\n" << std::fixed << std::setprecision(4);
    for (const auto& [cell, acc] : result.scores)
        std::cout << cell.id() << '\t' << acc << '\n';
    std::cout << "best: " << result.best.id() << "\n";
    const auto run_dir = make_run_dir(g, "grid-search", tcfg.seed);
    cfg.save((run_dir / "config.resolved").string());
    std::ofstream os(run_dir / "grid.tsv");
    os << std::fixed << std::setprecision(6);
    for (const auto& [cell, acc] : result.scores)
        os << cell.id() << '\t' << acc << '\n';
    return kExitOk;
}

int cmd_matrix(const GlobalOpts& g, const RunConfig& cfg, bool resume) {
    auto tcfg = train_config_from(cfg);
    const auto run_dir = make_run_dir(g, "matrix", tcfg.seed);
    auto data = load_training_data(cfg, tcfg);

    MatrixDeps deps;
    deps.train = &data.train;
    deps.eval = &data.eval;
    deps.vocab = &data.vocab;
    deps.embedding_file = cfg.get("embedding_file", "");
    deps.random_dim = static_cast<std::size_t>(cfg.get_long("dim", 300));
    deps.char_hash_dim = deps.random_dim;

    const auto manifest_path = run_dir / "cells.manifest";
    std::set<std::string> completed;
    if (resume) {
        std::ifstream mf(manifest_path);
        std::string line;
        while (std::getline(mf, line))
            if (!line.empty()) completed.insert(line);
    }
    std::ofstream manifest(manifest_path, std::ios::app);
    cfg.save((run_dir / "config.resolved").string());

    auto rows = experiment_matrix(
        default_matrix_cells(), deps, mcm_config_from(cfg), tcfg,
        resume ? &completed : nullptr, [&](const MatrixRow& row) {
            if (row.skipped) {
                std::cout << row.cell.id() << ": skipped (already completed)\n";
                return;
            }
            if (row.ok) {
                manifest << row.cell.id() << '\n';
                manifest.flush();
                std::cout << row.cell.id() << ": accuracy " << std::fixed
                          << std::setprecision(4) << row.metrics.accuracy << " f1 "
                          << row.metrics.macro_f1 << " (" << std::setprecision(1)
                          << row.wall_seconds << "s)\n";
            } else {
                std::cout << row.cell.id() << ": FAILED: " << row.error_message
                          << "\n";
            }
        });

    std::ofstream(run_dir / "results.csv") << matrix_csv(rows);
    std::ofstream(run_dir / "results.txt") << matrix_table(rows);
    std::cout << "\n" << matrix_table(rows);
    std::cout << "artifacts in " << run_dir.string() << "\n";

    std::size_t ok = 0, failed = 0;
    for (const auto& r : rows) {
        if (r.ok || r.skipped)
            ++ok;
        else
            ++failed;
    }
    return ok > 0 ? kExitOk : kExitNumeric;
}

int cmd_predict(const std::string& checkpoint_path) {
    auto ckpt = load_checkpoint(checkpoint_path);
    auto restored = restore_model(ckpt);
    Rng unused(0, Stream::misc);
    std::string line;
    while (std::getline(std::cin, line)) {
        for (char& c : line)
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        auto toks = tokenize(line);
        if (toks.empty()) {
            std::cout << "neutral\t0\t0\t0\n";
            continue;
        }
        EncodedBatch batch;
        batch.batch = 1;
        auto idx = encode(toks, restored.vocab);
        if (idx.size() > 60) idx.resize(60);
        batch.len = idx.size();
        batch.indices = idx;
        batch.mask.lengths = {idx.size()};
        batch.labels = {0};
        Tape tape;
        auto out = restored.model->forward(tape, batch, Mode::Infer, unused);
        const auto& p = out.final_probs.data();
        const auto pred = predict(out)[0];
        std::cout << label_name(static_cast<Label>(pred)) << '\t' << std::fixed
                  << std::setprecision(4) << p[0] << '\t' << p[1] << '\t' << p[2]
                  << '\n';
    }
    return kExitOk;
}

int cmd_make_data(const std::string& out_path, std::uint64_t seed) {
    auto examples = make_synthetic_multisenti(seed);
    save_dataset(out_path, examples);
    DatasetSplit split;
    split.examples = examples;
    std::cout << "wrote " << examples.size() << " synthetic records to " << out_path
              << "\n";
    print_class_stats(class_stats(split));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-cascaded sentiment classification toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "flat key=value config file");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--jobs", g.jobs, "max concurrent cells");
    app.add_option("--out", g.out_dir, "output directory for run artifacts");
    app.add_flag("--honest-validation", g.honest_validation,
                 "select checkpoints on a held-out validation split instead of "
                 "the test split");

    // preprocess
    auto* sp = app.add_subcommand("preprocess", "lowercase, drop single-token records");
    std::string pre_in, pre_out;
    sp->add_option("--in", pre_in, "input TSV")->required();
    sp->add_option("--out", pre_out, "output TSV")->required();

    // split
    auto* ss = app.add_subcommand("split", "stratified train/test split");
    std::string split_in, split_train, split_test;
    double split_fraction = 0.2;
    ss->add_option("--in", split_in)->required();
    ss->add_option("--out-train", split_train)->required();
    ss->add_option("--out-test", split_test)->required();
    ss->add_option("--test-fraction", split_fraction);

    // embed-train
    auto* se = app.add_subcommand("embed-train", "train skip-gram embeddings");
    std::vector<std::string> corpus_paths;
    std::string embed_out;
    std::map<std::string, std::string> embed_flags;
    se->add_option("--corpus", corpus_paths, "corpus text files, one sentence per line")
        ->required();
    se->add_option("--out-file", embed_out, "embedding output file")->required();
    long embed_dim = -1, embed_iters = -1, embed_window = -1, embed_negs = -1;
    se->add_option("--dim", embed_dim);
    se->add_option("--iterations", embed_iters);
    se->add_option("--window", embed_window);
    se->add_option("--negatives", embed_negs);

    // train
    auto* st = app.add_subcommand("train", "train a model");
    std::map<std::string, std::string> train_flags;
    std::string t_data, t_train, t_test, t_model, t_embedding, t_embfile;
    long t_epochs = -1, t_batch = -1, t_patience = -1, t_dim = -1;
    double t_lr = -1, t_lambda = -1, t_dropout = -1;
    std::string t_finetune;
    st->add_option("--data", t_data, "single TSV, split 80-20 internally");
    st->add_option("--train-data", t_train, "pre-made train split TSV");
    st->add_option("--test-data", t_test, "pre-made test split TSV");
    st->add_option("--model", t_model,
                   "mcm | convnet | attention_lstm | simpleconv | embedding_probe");
    st->add_option("--embedding", t_embedding,
                   "random | char-hash | pretrained | multilingual");
    st->add_option("--embedding-file", t_embfile);
    st->add_option("--finetune", t_finetune, "true|false");
    st->add_option("--epochs", t_epochs);
    st->add_option("--batch-size", t_batch);
    st->add_option("--patience", t_patience);
    st->add_option("--dim", t_dim);
    st->add_option("--lr", t_lr);
    st->add_option("--lambda", t_lambda);
    st->add_option("--dropout", t_dropout);

    // evaluate
    auto* sv = app.add_subcommand("evaluate", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data;
    long ev_batch = 64;
    sv->add_option("--checkpoint", ev_ckpt)->required();
    sv->add_option("--data", ev_data)->required();
    sv->add_option("--batch-size", ev_batch);

    // grid-search
    auto* sg = app.add_subcommand("grid-search", "hyperparameter grid search");
    std::string gs_data, gs_train, gs_test;
    long gs_epochs = -1;
    sg->add_option("--data", gs_data);
    sg->add_option("--train-data", gs_train);
    sg->add_option("--test-data", gs_test);
    sg->add_option("--epochs", gs_epochs);

    // matrix
    auto* sm = app.add_subcommand("matrix", "run the full experiment matrix");
    std::string mx_data, mx_train, mx_test, mx_embfile;
    long mx_epochs = -1, mx_batch = -1, mx_dim = -1, mx_patience = -1;
    bool mx_resume = false;
    sm->add_option("--data", mx_data);
    sm->add_option("--train-data", mx_train);
    sm->add_option("--test-data", mx_test);
    sm->add_option("--embedding-file", mx_embfile);
    sm->add_option("--epochs", mx_epochs);
    sm->add_option("--batch-size", mx_batch);
    sm->add_option("--patience", mx_patience);
    sm->add_option("--dim", mx_dim);
    sm->add_flag("--resume", mx_resume, "skip cells recorded in the manifest");

    // predict
    auto* spr = app.add_subcommand("predict", "classify tweets from stdin");
    std::string pr_ckpt;
    spr->add_option("--checkpoint", pr_ckpt)->required();

    // make-data
    auto* smd = app.add_subcommand(
        "make-data", "generate a synthetic corpus with a fixed class and language balance");
    std::string md_out;
    smd->add_option("--out-file", md_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sp->parsed()) return cmd_preprocess(pre_in, pre_out);
        if (ss->parsed())
            return cmd_split(split_in, split_train, split_test, split_fraction, g.seed);
        if (se->parsed()) {
            std::map<std::string, std::string> flags;
            if (embed_dim >= 0) flags["dim"] = std::to_string(embed_dim);
            if (embed_iters >= 0) flags["iterations"] = std::to_string(embed_iters);
            if (embed_window >= 0) flags["window"] = std::to_string(embed_window);
            if (embed_negs >= 0) flags["negatives"] = std::to_string(embed_negs);
            return cmd_embed_train(corpus_paths, resolve_config(g, flags), embed_out);
        }
        if (st->parsed()) {
            std::map<std::string, std::string> flags;
            if (!t_data.empty()) flags["data"] = t_data;
            if (!t_train.empty()) flags["train_data"] = t_train;
            if (!t_test.empty()) flags["test_data"] = t_test;
            if (!t_model.empty()) flags["model"] = t_model;
            if (!t_embedding.empty()) flags["embedding"] = t_embedding;
            if (!t_embfile.empty()) flags["embedding_file"] = t_embfile;
            if (!t_finetune.empty()) flags["finetune"] = t_finetune;
            if (t_epochs >= 0) flags["epochs"] = std::to_string(t_epochs);
            if (t_batch >= 0) flags["batch_size"] = std::to_string(t_batch);
            if (t_patience >= 0) flags["patience"] = std::to_string(t_patience);
            if (t_dim >= 0) flags["dim"] = std::to_string(t_dim);
            if (t_lr >= 0) flags["lr"] = std::to_string(t_lr);
            if (t_lambda >= 0) flags["lambda"] = std::to_string(t_lambda);
            if (t_dropout >= 0) flags["dropout"] = std::to_string(t_dropout);
            return cmd_train(g, resolve_config(g, flags));
        }
        if (sv->parsed())
            return cmd_evaluate(ev_ckpt, ev_data, static_cast<std::size_t>(ev_batch));
        if (sg->parsed()) {
            std::map<std::string, std::string> flags;
            if (!gs_data.empty()) flags["data"] = gs_data;
            if (!gs_train.empty()) flags["train_data"] = gs_train;
            if (!gs_test.empty()) flags["test_data"] = gs_test;
            if (gs_epochs >= 0) flags["epochs"] = std::to_string(gs_epochs);
            return cmd_grid_search(g, resolve_config(g, flags));
        }
        if (sm->parsed()) {
            std::map<std::string, std::string> flags;
            if (!mx_data.empty()) flags["data"] = mx_data;
            if (!mx_train.empty()) flags["train_data"] = mx_train;
            if (!mx_test.empty()) flags["test_data"] = mx_test;
            if (!mx_embfile.empty()) flags["embedding_file"] = mx_embfile;
            if (mx_epochs >= 0) flags["epochs"] = std::to_string(mx_epochs);
            if (mx_batch >= 0) flags["batch_size"] = std::to_string(mx_batch);
            if (mx_patience >= 0) flags["patience"] = std::to_string(mx_patience);
            if (mx_dim >= 0) flags["dim"] = std::to_string(mx_dim);
            return cmd_matrix(g, resolve_config(g, flags), mx_resume);
        }
        if (spr->parsed()) return cmd_predict(pr_ckpt);
        if (smd->parsed()) return cmd_make_data(md_out, g.seed);
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
