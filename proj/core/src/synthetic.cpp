#include "hybrank/synthetic.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "hybrank/error.hpp"
#include "hybrank/random.hpp"

namespace hybrank {

namespace {

std::string passage_id(std::size_t topic, std::size_t k) { return "p" + std::to_string(topic) + "_" + std::to_string(k); }

std::string template_term(std::size_t topic, std::size_t k) {
    return "topic" + std::to_string(topic) + "term" + std::to_string(k);
}

std::string filler(Rng& rng, std::size_t vocab, std::size_t n) {
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        s += " w" + std::to_string(uniform_index(rng, vocab));
    }
    return s;
}

std::vector<float> noisy(const std::vector<double>& mean, double noise, Rng& rng) {
    std::vector<float> v(mean.size());
    for (std::size_t k = 0; k < mean.size(); ++k) v[k] = static_cast<float>(mean[k] + noise * standard_normal(rng));
    return v;
}

}  // namespace

SyntheticBenchmark make_synthetic_benchmark(const SyntheticConfig& cfg) {
    const std::size_t P = cfg.positives_per_query;
    if (P == 0 || cfg.num_passages % P != 0) throw Error("num_passages must be a positive multiple of positives_per_query");
    if (cfg.list_length % P != 0 || cfg.list_length < 2 * P) {
        throw Error("list_length must be a multiple of positives_per_query holding at least one distractor topic");
    }
    if (cfg.swap_min > cfg.swap_max) throw Error("swap_min exceeds swap_max");
    if (cfg.query_template_terms > cfg.template_terms) throw Error("query_template_terms exceeds template_terms");
    const std::size_t topics = cfg.num_passages / P;
    const std::size_t topics_per_list = cfg.list_length / P;
    if (topics < topics_per_list) throw Error("not enough topics to fill a list");

    Rng rng(cfg.seed);
    SyntheticBenchmark bench;
    bench.embeddings = EmbeddingStore(cfg.embed_dim);

    std::vector<std::vector<double>> means(topics, std::vector<double>(cfg.embed_dim));
    for (auto& m : means) {
        for (double& x : m) x = standard_normal(rng);
    }

    std::vector<Document> docs;
    docs.reserve(cfg.num_passages);
    for (std::size_t t = 0; t < topics; ++t) {
        for (std::size_t k = 0; k < P; ++k) {
            std::string text;
            for (std::size_t w = 0; w < cfg.template_terms; ++w) text += (w ? " " : "") + template_term(t, w);
            text += filler(rng, cfg.filler_vocab, cfg.filler_terms);
            docs.push_back({passage_id(t, k), "", text});
            bench.embeddings.add(passage_id(t, k), noisy(means[t], cfg.noise, rng));
        }
    }
    bench.corpus = Corpus(std::move(docs));

    auto make_split = [&](SyntheticSplit& split, std::size_t count, const std::string& prefix) {
        for (std::size_t n = 0; n < count; ++n) {
            const std::string qid = prefix + std::to_string(n);
            const auto topic = static_cast<std::size_t>(uniform_index(rng, topics));

            std::vector<std::size_t> terms(cfg.template_terms);
            for (std::size_t w = 0; w < terms.size(); ++w) terms[w] = w;
            shuffle(terms, rng);
            std::string text;
            for (std::size_t w = 0; w < cfg.query_template_terms; ++w) text += (w ? " " : "") + template_term(topic, terms[w]);
            text += filler(rng, cfg.filler_vocab, cfg.filler_terms / 2);
            split.queries.emplace(qid, text);
            bench.embeddings.add(query_key(qid), noisy(means[topic], cfg.noise, rng));

            std::set<std::size_t> distractors;
            while (distractors.size() + 1 < topics_per_list) {
                const auto d = static_cast<std::size_t>(uniform_index(rng, topics));
                if (d != topic) distractors.insert(d);
            }
            std::vector<std::string> negatives;
            for (auto d : distractors) {
                for (std::size_t k = 0; k < P; ++k) negatives.push_back(passage_id(d, k));
            }
            shuffle(negatives, rng);

            std::vector<std::string> ranking;
            for (std::size_t k = 0; k < P; ++k) {
                ranking.push_back(passage_id(topic, k));
                split.qrels[qid][passage_id(topic, k)] = 1;
            }
            ranking.insert(ranking.end(), negatives.begin(), negatives.end());
            for (std::size_t k = 0; k < P; ++k) {
                const auto offset = cfg.swap_min + static_cast<std::size_t>(uniform_index(rng, cfg.swap_max - cfg.swap_min + 1));
                const auto target = std::min(k + offset, ranking.size() - 1);
                std::swap(ranking[k], ranking[target]);
            }
            auto& list = split.run[qid];
            for (std::size_t r = 0; r < ranking.size(); ++r) {
                list.push_back({ranking[r], static_cast<double>(ranking.size() - r)});
            }
        }
    };
    make_split(bench.train, cfg.train_queries, "train");
    make_split(bench.test, cfg.test_queries, "test");
    return bench;
}

}  // namespace hybrank
