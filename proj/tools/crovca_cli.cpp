// crovca: train, encode, query, eval and stats over precomputed embeddings.
//
// Exit codes: 0 success, 2 configuration/validation/format/capability errors,
// 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crovca/crovca.hpp"
#include "crovca/synthetic.hpp"

namespace {

using namespace crovca;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct TrainArgs {
    std::vector<std::string> views;
    std::string mode = "unsup";
    std::string labels;
    std::size_t bits = 16;
    std::size_t epochs = 5;
    std::size_t batch = 256;
    std::optional<double> lr;
    std::optional<double> wd;
    double lambda = 0.1;
    std::optional<std::size_t> layers;
    std::optional<std::size_t> width;
    std::string variant = "small";
    std::uint64_t seed = 0;
    std::optional<double> noise;
    double dropout = 0.1;
    double rate_d = 0.0;
    bool pool_one_view = false;
    bool ablation = false;
    bool augment_supervised = false;
    std::string out;
};

struct EncodeArgs {
    std::string model;
    std::string input;
    std::string out;
    bool logits = false;
    int head = 1;
    std::size_t chunk = 1024;
};

struct QueryArgs {
    std::string db;
    std::string queries;
    std::string model;
    int head = 1;
    std::string measure = "ah";
    std::size_t k = 100;
    std::size_t threads = 1;
    std::string out;
};

struct EvalArgs {
    std::vector<std::string> metrics{"map@1000"};
    std::string query_labels;
    std::string db_labels;
    std::string rankings;
    // direct mode
    std::string db;
    std::string queries;
    std::string model;
    int head = 1;
    std::string measure = "ah";
    std::size_t threads = 1;
};

struct StatsArgs {
    std::string codes;
    bool per_bit = false;
};

struct SynthArgs {
    ClusterSpec spec;
    std::string out_dir = ".";
};

struct CsvArgs {
    std::string in;
    std::string out;
};

// Flags are checked for consistency before any file is opened.
PairingConfig pairing_from(const TrainArgs& a) {
    PairingConfig p;
    if (a.mode == "unsup") {
        if (a.views.size() == 1) p.mode = PairingMode::embedding_augmentation;
        else if (a.views.size() == 2) p.mode = PairingMode::precomputed_pairs;
        else throw ConfigError("--mode unsup takes one view file (augmented) or two (precomputed pairs)");
    } else if (a.mode == "sup") {
        if (a.views.size() != 1) throw ConfigError("--mode sup takes exactly one view file");
        if (a.labels.empty()) throw ConfigError("--mode sup requires --labels");
        p.mode = PairingMode::class_batch_mean;
    } else if (a.mode == "dual") {
        if (a.views.size() != 2) throw ConfigError("--mode dual takes two view files (one per stream)");
        p.mode = PairingMode::dual_stream;
    } else {
        throw ConfigError("unknown --mode '" + a.mode + "' (expected unsup|sup|dual)");
    }
    if (!a.labels.empty() && a.mode != "sup") throw ConfigError("--labels is only used with --mode sup");
    if (a.augment_supervised && a.mode != "sup") throw ConfigError("--augment-supervised is only used with --mode sup");
    p.noise_sigma = a.noise;
    p.dropout_rate = a.dropout;
    p.batch_size = a.batch;
    p.seed = a.seed;
    p.augment_supervised = a.augment_supervised;
    p.validate();
    return p;
}

TrainConfig train_config_from(const TrainArgs& a) {
    Variant v;
    if (a.variant == "small") v = Variant::small;
    else if (a.variant == "large") v = Variant::large;
    else throw ConfigError("unknown --variant '" + a.variant + "' (expected small|large)");
    TrainConfig cfg = TrainConfig::for_variant(v);
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.bits = a.bits;
    if (a.layers) cfg.layers = *a.layers;
    if (a.width) cfg.width = *a.width;
    if (a.lr) cfg.optimizer.lr = *a.lr;
    if (a.wd) cfg.optimizer.weight_decay = *a.wd;
    cfg.diversity.lambda = a.lambda;
    cfg.diversity.rate_scale_d = a.rate_d;
    cfg.diversity.pool_both_views = !a.pool_one_view;
    cfg.diversity.ablation = a.ablation;
    cfg.seed = a.seed;
    if (cfg.layers != 2 && cfg.layers != 3) throw ConfigError("--layers must be 2 or 3");
    cfg.validate();
    return cfg;
}

int cmd_train(const TrainArgs& a) {
    const PairingConfig pairing = pairing_from(a);
    const TrainConfig cfg = train_config_from(a);
    if (a.out.empty()) throw ConfigError("--out is required");

    const DenseMatrix primary = read_embeddings(a.views[0]);
    std::optional<DenseMatrix> secondary;
    if (a.views.size() == 2) secondary = read_embeddings(a.views[1]);
    std::optional<LabelSet> labels;
    if (!a.labels.empty()) labels = read_labels(a.labels);

    TrainData data{&primary, secondary ? &*secondary : nullptr, labels ? &*labels : nullptr};
    std::cout << "# mode=" << to_string(pairing.mode) << " bits=" << cfg.bits << " layers=" << cfg.layers
              << " width=" << cfg.width << " epochs=" << cfg.epochs << " batch=" << cfg.batch_size
              << " lr=" << cfg.optimizer.lr << " wd=" << cfg.optimizer.weight_decay << " lambda=" << cfg.diversity.lambda
              << " seed=" << cfg.seed << "\n";
    const TrainResult result =
        train(data, pairing, cfg, [](const StepLog& s) { std::cout << format_step(s) << "\n"; });
    for (const auto& e : result.epochs) std::cout << format_epoch(e) << "\n";
    write_checkpoint(result.model, a.out);
    std::cout << "# wrote " << a.out << "\n";
    return 0;
}

const HashCoder& select_head(const CodeModel& model, int head) {
    if (head < 1) throw ConfigError("--head must be 1 or 2");
    return model.head(static_cast<std::size_t>(head - 1));
}

int cmd_encode(const EncodeArgs& a) {
    const CodeModel model = read_checkpoint(a.model);
    const HashCoder& head = select_head(model, a.head);
    const DenseMatrix x = read_embeddings(a.input);
    const PackedCodeSet codes = encode(head, x, a.logits, a.chunk);
    write_codes(codes, a.logits, a.out);
    std::cout << "# wrote " << codes.rows() << " codes of " << codes.bits() << " bits to " << a.out << "\n";
    return 0;
}

RankedList run_query(const std::string& db_path, const std::string& queries_path, const std::string& model_path,
                     int head_id, Measure measure, std::size_t k, std::size_t threads) {
    if (k < 1) throw ConfigError("--k must be >= 1");
    const PackedCodeSet db = read_codes(db_path);
    if (measure == Measure::symbce && !db.has_logits()) {
        throw CapabilityError("--measure symbce needs a code file written with logits (encode --logits)");
    }
    const CodeModel model = read_checkpoint(model_path);
    const HashCoder& head = select_head(model, head_id);
    const DenseMatrix q = read_embeddings(queries_path);
    const CodeIndex index(db);
    return index.topk(QueryBatch(compute_logits(head, q)), measure, k, {threads, 1});
}

int cmd_query(const QueryArgs& a) {
    const Measure measure = parse_measure(a.measure);
    if (a.k < 1) throw ConfigError("--k must be >= 1");
    const RankedList ranks = run_query(a.db, a.queries, a.model, a.head, measure, a.k, a.threads);
    if (a.out.empty() || a.out == "-") {
        write_rankings(std::cout, ranks);
    } else {
        std::ofstream out(a.out);
        if (!out) throw IoError("cannot open " + a.out);
        write_rankings(out, ranks);
    }
    return 0;
}

int cmd_eval(const EvalArgs& a) {
    std::vector<MetricSpec> specs;
    std::size_t depth = 0;
    for (const auto& m : a.metrics) {
        specs.push_back(parse_metric(m));
        depth = std::max(depth, specs.back().k);
    }
    const bool direct = !a.db.empty() || !a.queries.empty() || !a.model.empty();
    if (direct == !a.rankings.empty()) {
        throw ConfigError("eval needs either --rankings or all of --db/--queries/--model");
    }
    if (direct && (a.db.empty() || a.queries.empty() || a.model.empty())) {
        throw ConfigError("direct eval needs --db, --queries and --model");
    }
    const Measure measure = parse_measure(a.measure);
    const LabelSet q_labels = read_labels(a.query_labels);
    const LabelSet db_labels = read_labels(a.db_labels);

    RankedList ranks;
    if (direct) {
        ranks = run_query(a.db, a.queries, a.model, a.head, measure, depth, a.threads);
    } else if (a.rankings == "-") {
        ranks = parse_rankings(std::cin);
    } else {
        std::ifstream in(a.rankings);
        if (!in) throw IoError("cannot open " + a.rankings);
        ranks = parse_rankings(in);
    }
    for (const auto& spec : specs) std::cout << evaluate(ranks, q_labels, db_labels, spec).to_line() << "\n";
    return 0;
}

int cmd_stats(const StatsArgs& a) {
    const PackedCodeSet codes = read_codes(a.codes);
    const CodeStats s = code_stats(codes);
    double lo = 1.0, hi = 0.0;
    for (double r : s.bit_rates) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "rows=%zu bits=%zu unique=%zu mean_entropy=%.6f bit_rate_min=%.4f bit_rate_max=%.4f",
                  codes.rows(), codes.bits(), s.unique_codes, s.mean_entropy, lo, hi);
    std::cout << buf << "\n";
    if (a.per_bit) {
        for (std::size_t j = 0; j < s.bit_rates.size(); ++j) {
            std::snprintf(buf, sizeof buf, "bit=%zu rate=%.6f entropy=%.6f", j, s.bit_rates[j], s.bit_entropy[j]);
            std::cout << buf << "\n";
        }
    }
    return 0;
}

int cmd_synth(const SynthArgs& a) {
    const ClusterDataset ds = make_cluster_dataset(a.spec);
    const std::string dir = a.out_dir.empty() ? "." : a.out_dir;
    auto emit = [&](const std::string& name, const LabeledSplit& split) {
        write_embeddings(split.embeddings, dir + "/" + name + ".cvca");
        write_labels(split.labels, dir + "/" + name + ".cvlb");
    };
    emit("train", ds.train);
    emit("db", ds.db);
    emit("query", ds.query);
    std::cout << "# wrote train/db/query .cvca/.cvlb to " << dir << "\n";
    return 0;
}

int cmd_import_csv(const CsvArgs& a) {
    const DenseMatrix m = read_csv_embeddings(a.in);
    write_embeddings(m, a.out);
    std::cout << "# wrote " << m.rows() << "x" << m.cols() << " to " << a.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"crovca: cross-view code alignment hashing over precomputed embeddings"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "Train a HashCoder head and write a checkpoint");
    train_cmd->add_option("--views", ta.views, "Embedding file(s): one (augmented), two (precomputed pairs or dual streams)")
        ->required()
        ->delimiter(',');
    train_cmd->add_option("--mode", ta.mode, "unsup | sup | dual")->capture_default_str();
    train_cmd->add_option("--labels", ta.labels, "Label file (required for --mode sup)");
    train_cmd->add_option("--bits", ta.bits, "Code length b")->capture_default_str();
    train_cmd->add_option("--epochs", ta.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--batch", ta.batch, "Batch size")->capture_default_str();
    train_cmd->add_option("--lr", ta.lr, "AdamW learning rate [default: 1e-3 small, 1e-4 large]");
    train_cmd->add_option("--wd", ta.wd, "AdamW weight decay [default: 1e-2 small, 1e-4 large]");
    train_cmd->add_option("--lambda", ta.lambda, "Coding-rate weight")->capture_default_str();
    train_cmd->add_option("--layers", ta.layers, "Linear layers in the head, 2 or 3 [default: 2 small, 3 large]");
    train_cmd->add_option("--width", ta.width, "Hidden width [default: 512 small, 2048 large]");
    train_cmd->add_option("--variant", ta.variant, "small | large")->capture_default_str();
    train_cmd->add_option("--seed", ta.seed, "Seed")->capture_default_str();
    train_cmd->add_option("--noise", ta.noise, "Augmentation noise std [default: 0.1 x RMS of embedding entries]");
    train_cmd->add_option("--dropout", ta.dropout, "Augmentation coordinate dropout rate")->capture_default_str();
    train_cmd->add_option("--rate-d", ta.rate_d, "Coding-rate scale constant d (0: d = b * pool size)")->capture_default_str();
    train_cmd->add_flag("--pool-one-view", ta.pool_one_view, "Coding rate over view-1 logits only");
    train_cmd->add_flag("--ablation", ta.ablation, "Allow --lambda 0");
    train_cmd->add_flag("--augment-supervised", ta.augment_supervised, "Augment view 1 in supervised mode");
    train_cmd->add_option("--out", ta.out, "Checkpoint path (.cvck)")->required();

    EncodeArgs ea;
    auto* encode_cmd = app.add_subcommand("encode", "Encode embeddings into a code file");
    encode_cmd->add_option("--model", ea.model, "Checkpoint (.cvck)")->required();
    encode_cmd->add_option("--input", ea.input, "Embeddings (.cvca)")->required();
    encode_cmd->add_option("--out", ea.out, "Code file (.cvcd)")->required();
    encode_cmd->add_flag("--logits", ea.logits, "Store logits (needed for symbce)");
    encode_cmd->add_option("--head", ea.head, "Head to use (dual-head models)")->capture_default_str();
    encode_cmd->add_option("--chunk", ea.chunk, "Rows per forward pass")->capture_default_str();

    QueryArgs qa;
    auto* query_cmd = app.add_subcommand("query", "Top-k search of query embeddings against a code file");
    query_cmd->add_option("--db", qa.db, "Database codes (.cvcd)")->required();
    query_cmd->add_option("--queries", qa.queries, "Query embeddings (.cvca)")->required();
    query_cmd->add_option("--model", qa.model, "Checkpoint (.cvck)")->required();
    query_cmd->add_option("--head", qa.head, "Head for the queries")->capture_default_str();
    query_cmd->add_option("--measure", qa.measure, "h | ah | bce | symbce")->capture_default_str();
    query_cmd->add_option("--k", qa.k, "Neighbours per query")->capture_default_str();
    query_cmd->add_option("--threads", qa.threads, "Scan threads")->capture_default_str();
    query_cmd->add_option("--out", qa.out, "Rankings output (default stdout)");

    EvalArgs va;
    auto* eval_cmd = app.add_subcommand("eval", "Retrieval metrics from rankings or from a direct query run");
    eval_cmd->add_option("--metric", va.metrics, "map@K or recall@K, repeatable")->capture_default_str();
    eval_cmd->add_option("--query-labels", va.query_labels, "Query labels (.cvlb)")->required();
    eval_cmd->add_option("--db-labels", va.db_labels, "Database labels (.cvlb)")->required();
    eval_cmd->add_option("--rankings", va.rankings, "Rankings file from `query` ('-' for stdin)");
    eval_cmd->add_option("--db", va.db, "Database codes (direct mode)");
    eval_cmd->add_option("--queries", va.queries, "Query embeddings (direct mode)");
    eval_cmd->add_option("--model", va.model, "Checkpoint (direct mode)");
    eval_cmd->add_option("--head", va.head, "Head for the queries")->capture_default_str();
    eval_cmd->add_option("--measure", va.measure, "h | ah | bce | symbce")->capture_default_str();
    eval_cmd->add_option("--threads", va.threads, "Scan threads")->capture_default_str();

    StatsArgs sa;
    auto* stats_cmd = app.add_subcommand("stats", "Bit balance, entropy and unique-code count of a code file");
    stats_cmd->add_option("--codes", sa.codes, "Code file (.cvcd)")->required();
    stats_cmd->add_flag("--per-bit", sa.per_bit, "Print one line per bit");

    SynthArgs ya;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic Gaussian-cluster dataset");
    synth_cmd->add_option("--out-dir", ya.out_dir, "Output directory")->capture_default_str();
    synth_cmd->add_option("--clusters", ya.spec.clusters, "Clusters")->capture_default_str();
    synth_cmd->add_option("--dim", ya.spec.dim, "Dimension")->capture_default_str();
    synth_cmd->add_option("--radius", ya.spec.radius, "Center radius")->capture_default_str();
    synth_cmd->add_option("--noise", ya.spec.noise, "Noise std")->capture_default_str();
    synth_cmd->add_option("--train", ya.spec.train_rows, "Train rows")->capture_default_str();
    synth_cmd->add_option("--db", ya.spec.db_rows, "Database rows")->capture_default_str();
    synth_cmd->add_option("--query", ya.spec.query_rows, "Query rows")->capture_default_str();
    synth_cmd->add_option("--seed", ya.spec.seed, "Seed")->capture_default_str();

    CsvArgs ca;
    auto* csv_cmd = app.add_subcommand("import-csv", "Convert CSV embeddings to a .cvca file");
    csv_cmd->add_option("--in", ca.in, "CSV input")->required();
    csv_cmd->add_option("--out", ca.out, "Embedding file (.cvca)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*train_cmd) return cmd_train(ta);
        if (*encode_cmd) return cmd_encode(ea);
        if (*query_cmd) return cmd_query(qa);
        if (*eval_cmd) return cmd_eval(va);
        if (*stats_cmd) return cmd_stats(sa);
        if (*synth_cmd) return cmd_synth(ya);
        if (*csv_cmd) return cmd_import_csv(ca);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
