#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hybrank/binary_io.hpp"
#include "hybrank/corpus_io.hpp"
#include "hybrank/dense_sim.hpp"
#include "hybrank/error.hpp"
#include "hybrank/features.hpp"
#include "hybrank/metrics.hpp"
#include "hybrank/model.hpp"
#include "hybrank/sparse_sim.hpp"
#include "hybrank/synthetic.hpp"
#include "hybrank/trainer.hpp"

namespace fs = std::filesystem;

namespace hybrank::cli {
namespace {

const std::vector<std::string> kDefaultMetrics{"r@1", "r@5", "r@10", "r@20", "r@50", "mrr@10", "ndcg@10"};

struct IndexArgs {
    std::string corpus, output, stopwords;
    double k1 = 0.9, b = 0.4;
    bool force = false;
};

struct FeatureArgs {
    std::string run, queries, index, embeddings, embedding_ids, output;
    std::string anchors = "all";
    std::string strategy = "top";
    std::string mode = "hybrid";
    double t_sparse = 100.0, t_dense = 10.0;
    std::uint64_t seed = 0;
    std::size_t depth = 100;
    bool query_only = false;
};

struct TrainArgs {
    std::string features, qrels, dev_features, dev_qrels, output;
    ModelConfig model;
    TrainConfig train;
    std::string channels = "hybrid";
    std::string activation = "gelu";
    bool no_interaction = false, no_query_row = false, no_positions = false;
};

struct RerankArgs {
    std::string checkpoint, features, run, output;
    std::string tag = "hybrank";
    std::size_t depth = 100;
};

struct EvalArgs {
    std::string run, qrels;
    std::vector<std::string> metrics = kDefaultMetrics;
    std::size_t depth = 1000;
};

struct ConvertArgs {
    std::string input, output, ids;
};

struct SynthArgs {
    std::string output;
    SyntheticConfig cfg;
};

void require_writable(const fs::path& path, bool force) {
    if (fs::exists(path) && !force) {
        throw Error("refusing to overwrite '" + path.string() + "' (pass --force to rebuild)");
    }
}

int cmd_index(const IndexArgs& a, std::ostream& out) {
    require_writable(a.output, a.force);
    BM25Params params{a.k1, a.b};
    params.validate();
    std::set<std::string> stop;
    if (!a.stopwords.empty()) {
        std::ifstream in(a.stopwords);
        if (!in) throw Error("cannot open '" + a.stopwords + "'");
        for (std::string w; in >> w;) stop.insert(w);
    }
    const Corpus corpus = load_corpus(a.corpus);
    const TermIndex index = TermIndex::build(corpus, params, Tokenizer(std::move(stop)));
    index.save(a.output);
    out << "indexed " << index.num_docs() << " documents, " << index.num_terms() << " terms\n";
    return kExitOk;
}

int cmd_features(const FeatureArgs& a, std::ostream& out) {
    FeatureOptions opts;
    opts.mode = parse_feature_mode(a.mode);
    opts.strategy = parse_anchor_strategy(a.strategy);
    opts.seed = a.seed;
    opts.norm = {a.t_sparse, a.t_dense};
    opts.query_only = a.query_only;
    if (a.anchors != "all") {
        std::size_t used = 0;
        long long n = 0;
        try {
            n = std::stoll(a.anchors, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != a.anchors.size() || n <= 0) throw Error("--anchors expects a positive count or 'all'");
        opts.anchors = static_cast<std::size_t>(n);
    } else if (opts.strategy == AnchorStrategy::random) {
        throw Error("--anchor-strategy random needs an explicit --anchors count");
    }

    const bool need_sparse = opts.mode != FeatureMode::dense;
    const bool need_dense = opts.mode != FeatureMode::sparse;
    if (need_sparse && a.index.empty()) throw Error("--mode " + a.mode + " needs --index");
    if (need_dense && a.embeddings.empty()) throw Error("--mode " + a.mode + " needs --embeddings");

    const Run run = load_run(a.run, a.depth);
    const QuerySet queries = load_queries(a.queries);
    TermIndex index;
    EmbeddingStore store;
    if (need_sparse) index = TermIndex::load(a.index);
    if (need_dense) {
        const fs::path ids = a.embedding_ids.empty() ? fs::path(a.embeddings + ".ids") : fs::path(a.embedding_ids);
        store = load_embeddings(a.embeddings, ids);
    }

    std::vector<std::string> corpus_ids;
    if (opts.strategy == AnchorStrategy::random) {
        if (need_sparse) {
            for (std::size_t i = 0; i < index.num_docs(); ++i) corpus_ids.push_back(index.doc_id(i));
        } else {
            for (const auto& id : store.ids())
                if (id.rfind("q:", 0) != 0) corpus_ids.push_back(id);
        }
    }

    const auto feats = build_run_features(run, queries, need_sparse ? &index : nullptr, need_dense ? &store : nullptr,
                                          opts, corpus_ids);
    FeatureCacheKey key;
    key.run_hash = io::hex64(io::fnv1a64(io::read_file(a.run)));
    key.strategy = opts.strategy;
    key.anchors = opts.anchors;
    key.seed = opts.seed;
    key.mode = opts.mode;
    key.norm = opts.norm;
    key.query_only = opts.query_only;
    FeatureCache::write(a.output, key, feats);

    std::size_t max_rows = 0, max_cols = 0;
    for (const auto& f : feats) {
        max_rows = std::max(max_rows, f.tensor.rows());
        max_cols = std::max(max_cols, f.tensor.cols());
    }
    out << "wrote features for " << feats.size() << " queries (up to " << max_rows << " rows x " << max_cols
        << " anchors x 2 channels, mode " << to_string(opts.mode) << ")\n";
    return kExitOk;
}

int cmd_train(TrainArgs a, std::ostream& out) {
    a.model.use_interaction = !a.no_interaction;
    a.model.use_query_row = !a.no_query_row;
    a.model.use_positions = !a.no_positions;
    const FeatureMode channels = parse_feature_mode(a.channels);
    a.model.channels_active = {channels != FeatureMode::dense, channels != FeatureMode::sparse};
    if (a.activation == "gelu") {
        a.model.activation = Activation::gelu;
    } else if (a.activation == "relu") {
        a.model.activation = Activation::relu;
    } else {
        throw Error("unknown activation '" + a.activation + "'");
    }
    a.model.validate();
    a.train.validate();
    if (a.dev_features.empty() != a.dev_qrels.empty()) throw Error("--dev-features and --dev-qrels go together");

    const auto feats = FeatureCache::read(a.features);
    const Qrels qrels = load_qrels(a.qrels);
    std::vector<QueryFeatures> dev_feats;
    Qrels dev_qrels;
    DevSet dev;
    if (!a.dev_features.empty()) {
        dev_feats = FeatureCache::read(a.dev_features);
        dev_qrels = load_qrels(a.dev_qrels);
        dev = {&dev_feats, &dev_qrels};
    }

    const fs::path dir(a.output);
    fs::create_directories(dir);
    TrainSummary summary;
    const HybRankModel model = train(feats, qrels, a.model, a.train, dev, {dir, dir / "train_log.jsonl"}, &summary);
    model.save(dir / "model.ckpt");

    out << summary.filter.summary() << '\n';
    out << "trained " << summary.step_losses.size() << " steps over " << summary.epochs.size() << " epochs; final loss "
        << (summary.epochs.empty() ? 0.0 : summary.epochs.back().mean_loss) << '\n';
    if (dev.features) out << "best dev mrr@10 " << summary.best_dev << " at epoch " << summary.best_epoch << '\n';
    out << "model: " << (dir / "model.ckpt").string() << " (" << param_count(a.model) << " parameters)\n";
    return kExitOk;
}

int cmd_rerank(const RerankArgs& a, std::ostream& out, std::ostream& err) {
    const HybRankModel model = HybRankModel::load(a.checkpoint);
    const auto feats = FeatureCache::read(a.features);
    const Run input = load_run(a.run, a.depth);
    std::map<std::string, const QueryFeatures*> by_qid;
    for (const auto& f : feats) by_qid[f.qid] = &f;

    Run output;
    std::size_t reranked = 0;
    for (const auto& [qid, list] : input) {
        auto it = by_qid.find(qid);
        if (it == by_qid.end()) {
            err << "warning: no features for query '" << qid << "'; keeping its initial order\n";
            output[qid] = list;
            continue;
        }
        const QueryFeatures& f = *it->second;
        bool same = f.passage_ids.size() == list.size();
        for (std::size_t i = 0; same && i < list.size(); ++i) same = f.passage_ids[i] == list[i].doc_id;
        if (!same) throw Error("features for query '" + qid + "' were built from a different list");
        output[qid] = rerank(f.passage_ids, model.score_all(f.tensor));
        ++reranked;
    }
    write_run(output, a.output, a.tag);
    out << "reranked " << reranked << " of " << input.size() << " queries -> " << a.output << '\n';
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    std::vector<MetricSpec> specs;
    for (const auto& m : a.metrics) specs.push_back(MetricSpec::parse(m));
    out << metric_report_json(load_run(a.run, a.depth), load_qrels(a.qrels), specs) << '\n';
    return kExitOk;
}

int cmd_embed_convert(const ConvertArgs& a, std::ostream& out) {
    const EmbeddingStore store = load_text_embeddings(a.input);
    const fs::path ids = a.ids.empty() ? fs::path(a.output + ".ids") : fs::path(a.ids);
    store.save(a.output, ids);
    out << "converted " << store.size() << " vectors of dimension " << store.dim() << '\n';
    return kExitOk;
}

void write_queries(const QuerySet& q, const fs::path& path) {
    io::write_atomically(path, [&](std::ostream& o) {
        for (const auto& [id, text] : q) o << id << '\t' << text << '\n';
    });
}

void write_qrels(const Qrels& q, const fs::path& path) {
    io::write_atomically(path, [&](std::ostream& o) {
        for (const auto& [qid, docs] : q)
            for (const auto& [d, g] : docs) o << qid << " 0 " << d << ' ' << g << '\n';
    });
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    const auto bench = make_synthetic_benchmark(a.cfg);
    const fs::path dir(a.output);
    fs::create_directories(dir);
    io::write_atomically(dir / "corpus.jsonl", [&](std::ostream& o) {
        for (const auto& d : bench.corpus.documents()) {
            nlohmann::json j{{"id", d.id}, {"text", d.text}};
            o << j.dump() << '\n';
        }
    });
    bench.embeddings.save(dir / "embeddings.bin", dir / "embeddings.bin.ids");
    for (const auto& [name, split] : {std::pair{"train", &bench.train}, std::pair{"test", &bench.test}}) {
        write_queries(split->queries, dir / (std::string(name) + ".queries.tsv"));
        write_run(split->run, dir / (std::string(name) + ".run"), "initial");
        write_qrels(split->qrels, dir / (std::string(name) + ".qrels"));
    }
    out << "wrote " << bench.corpus.size() << " passages, " << bench.train.queries.size() << " train and "
        << bench.test.queries.size() << " test queries to " << dir.string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Collaborative passage reranker"};
    app.name("hybrank");
    app.require_subcommand(1);
    // Config keys live in per-command sections ([train] ...); flags given on
    // the command line take precedence over file values.
    app.set_config("--config", "", "INI/TOML file with per-command sections");
    app.fallthrough();

    std::function<int()> action;

    IndexArgs ia;
    auto* index = app.add_subcommand("index", "Build a BM25 term index from a JSON-lines corpus");
    index->add_option("--corpus", ia.corpus, "Corpus file (JSON lines)")->required()->check(CLI::ExistingFile);
    index->add_option("--output,-o", ia.output, "Index file to write")->required();
    index->add_option("--k1", ia.k1, "BM25 term-frequency saturation")->capture_default_str();
    index->add_option("--b", ia.b, "BM25 length normalization")->capture_default_str();
    index->add_option("--stopwords", ia.stopwords, "Whitespace-separated stopword file")->check(CLI::ExistingFile);
    index->add_flag("--force", ia.force, "Overwrite an existing index");
    index->callback([&] { action = [&] { return cmd_index(ia, out); }; });

    FeatureArgs fa;
    auto* features = app.add_subcommand("features", "Precompute normalized similarity features for a run");
    features->add_option("--run", fa.run, "Initial TREC run")->required()->check(CLI::ExistingFile);
    features->add_option("--queries", fa.queries, "Query file")->required()->check(CLI::ExistingFile);
    features->add_option("--index", fa.index, "Term index (sparse channel)")->check(CLI::ExistingFile);
    features->add_option("--embeddings", fa.embeddings, "Binary embedding file (dense channel)")
        ->check(CLI::ExistingFile);
    features->add_option("--embedding-ids", fa.embedding_ids, "Embedding id list (default: <embeddings>.ids)");
    features->add_option("--output,-o", fa.output, "Feature cache directory")->required();
    features->add_option("--anchors", fa.anchors, "Anchor count, or 'all' for the whole list")->capture_default_str();
    features->add_option("--anchor-strategy", fa.strategy, "top | random")
        ->check(CLI::IsMember({"top", "random"}))
        ->capture_default_str();
    features->add_option("--mode", fa.mode, "sparse | dense | hybrid")
        ->check(CLI::IsMember({"sparse", "dense", "hybrid"}))
        ->capture_default_str();
    features->add_option("--t-sparse", fa.t_sparse, "Sparse softmax temperature")->capture_default_str();
    features->add_option("--t-dense", fa.t_dense, "Dense softmax temperature")->capture_default_str();
    features->add_option("--seed", fa.seed, "Seed for random anchors")->capture_default_str();
    features->add_option("--depth", fa.depth, "Run depth to keep")->capture_default_str()->check(CLI::PositiveNumber);
    features->add_flag("--query-only,--no-collab", fa.query_only, "Query-passage similarities only");
    features->callback([&] { action = [&] { return cmd_features(fa, out); }; });

    TrainArgs ta;
    auto* trainc = app.add_subcommand("train", "Train a reranker on cached features");
    trainc->add_option("--features", ta.features, "Training feature cache")->required()->check(CLI::ExistingDirectory);
    trainc->add_option("--qrels", ta.qrels, "Training qrels")->required()->check(CLI::ExistingFile);
    trainc->add_option("--dev-features", ta.dev_features, "Dev feature cache")->check(CLI::ExistingDirectory);
    trainc->add_option("--dev-qrels", ta.dev_qrels, "Dev qrels")->check(CLI::ExistingFile);
    trainc->add_option("--output,-o", ta.output, "Directory for checkpoints and the log")->required();
    trainc->add_option("--dim", ta.model.dim)->capture_default_str();
    trainc->add_option("--inner", ta.model.inner)->capture_default_str();
    trainc->add_option("--heads", ta.model.heads)->capture_default_str();
    trainc->add_option("--layers-inter", ta.model.layers_inter)->capture_default_str();
    trainc->add_option("--layers-aggr", ta.model.layers_aggr)->capture_default_str();
    trainc->add_option("--max-rank", ta.model.max_rank)->capture_default_str();
    trainc->add_option("--activation", ta.activation)->check(CLI::IsMember({"gelu", "relu"}))->capture_default_str();
    trainc->add_flag("--pre-norm", ta.model.pre_norm);
    trainc->add_flag("--separate-cls", ta.model.separate_cls);
    trainc->add_option("--channels", ta.channels, "Feature channels the model reads")
        ->check(CLI::IsMember({"sparse", "dense", "hybrid"}))
        ->capture_default_str();
    trainc->add_flag("--no-interaction", ta.no_interaction, "Skip the anchor-wise interaction stack");
    trainc->add_flag("--no-query-row", ta.no_query_row, "Drop the query row; use a learned query token");
    trainc->add_flag("--no-positions", ta.no_positions, "Disable rank position embeddings");
    trainc->add_option("--lr", ta.train.lr)->capture_default_str();
    trainc->add_option("--warmup", ta.train.warmup_ratio, "Warm-up fraction of all steps")->capture_default_str();
    trainc->add_option("--clip", ta.train.clip_norm)->capture_default_str();
    trainc->add_option("--weight-decay", ta.train.weight_decay)->capture_default_str();
    trainc->add_option("--epochs", ta.train.epochs)->capture_default_str();
    trainc->add_option("--batch", ta.train.batch_queries, "Queries per step")->capture_default_str();
    trainc->add_option("--tau", ta.train.tau)->capture_default_str();
    trainc->add_option("--seed", ta.train.seed, "Shuffle seed")->capture_default_str();
    trainc->add_option("--init-seed", ta.model.init_seed)->capture_default_str();
    trainc->callback([&] { action = [&] { return cmd_train(ta, out); }; });

    RerankArgs ra;
    auto* rerankc = app.add_subcommand("rerank", "Rerank a run with a trained checkpoint");
    rerankc->add_option("--checkpoint", ra.checkpoint)->required()->check(CLI::ExistingFile);
    rerankc->add_option("--features", ra.features)->required()->check(CLI::ExistingDirectory);
    rerankc->add_option("--run", ra.run, "Initial run the features were built from")
        ->required()
        ->check(CLI::ExistingFile);
    rerankc->add_option("--output,-o", ra.output)->required();
    rerankc->add_option("--tag", ra.tag)->capture_default_str();
    rerankc->add_option("--depth", ra.depth)->capture_default_str()->check(CLI::PositiveNumber);
    rerankc->callback([&] { action = [&] { return cmd_rerank(ra, out, err); }; });

    EvalArgs ea;
    auto* evalc = app.add_subcommand("eval", "Print a JSON metric report");
    evalc->add_option("--run", ea.run)->required()->check(CLI::ExistingFile);
    evalc->add_option("--qrels", ea.qrels)->required()->check(CLI::ExistingFile);
    evalc->add_option("--metrics", ea.metrics, "Comma-separated metric list")->delimiter(',')->capture_default_str();
    evalc->add_option("--depth", ea.depth)->capture_default_str()->check(CLI::PositiveNumber);
    evalc->callback([&] { action = [&] { return cmd_eval(ea, out); }; });

    ConvertArgs ca;
    auto* conv = app.add_subcommand("embed-convert", "Convert text embeddings to the binary format");
    conv->add_option("--input", ca.input, "Lines of 'id v1 ... vD'")->required()->check(CLI::ExistingFile);
    conv->add_option("--output,-o", ca.output, "Binary vector file")->required();
    conv->add_option("--ids", ca.ids, "Id list to write (default: <output>.ids)");
    conv->callback([&] { action = [&] { return cmd_embed_convert(ca, out); }; });

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "Write the synthetic benchmark to a directory");
    synth->add_option("--output,-o", sa.output)->required();
    synth->add_option("--passages", sa.cfg.num_passages)->capture_default_str();
    synth->add_option("--train-queries", sa.cfg.train_queries)->capture_default_str();
    synth->add_option("--test-queries", sa.cfg.test_queries)->capture_default_str();
    synth->add_option("--list-length", sa.cfg.list_length)->capture_default_str();
    synth->add_option("--embed-dim", sa.cfg.embed_dim)->capture_default_str();
    synth->add_option("--noise", sa.cfg.noise)->capture_default_str();
    synth->add_option("--seed", sa.cfg.seed)->capture_default_str();
    synth->callback([&] { action = [&] { return cmd_synth(sa, out); }; });

    std::vector<const char*> argv{"hybrank"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "error: " << e.what() << "\n\n";
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        err << (sub ? sub->help() : app.help());
        return kExitUsage;
    }

    try {
        return action ? action() : kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace hybrank::cli
