#include "masolab/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "masolab/analysis.hpp"
#include "masolab/errors.hpp"
#include "masolab/io.hpp"
#include "masolab/partition.hpp"
#include "masolab/rng.hpp"
#include "masolab/svg.hpp"
#include "masolab/train.hpp"
#include "masolab/vq.hpp"

namespace masolab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string model;

    std::optional<std::size_t> level;
    std::string scope = "cumulative";
    std::optional<std::size_t> resolution;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> k;
    std::optional<std::size_t> queries;
    std::optional<std::size_t> clusters;
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> epochs;
    std::vector<std::string> inputs;
    std::string a;
    std::string b;
    std::size_t i = 0;
    std::size_t j = 1;
    std::size_t pairs = 10000;
    std::size_t dim = 8;
    std::vector<std::string> cases{"2:1", "4:1", "10:2"};
    std::vector<std::size_t> widths{8, 16, 32, 64};
    std::size_t seeds = 1;
    std::size_t batch = 32;
    std::size_t train_samples = 512;
    bool partition = false;
    bool histogram = false;
    bool neighbor_grid = false;
    bool points = false;
};

// Network of the shipped toy config, used when no --config is given.
ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.name = "toy-2-45-3-4";
    cfg.seed = 7;
    cfg.network.input_shape = {2, 1, 1};
    cfg.network.classes = 4;
    cfg.network.layers = {DensePlan{45}, BatchNormPlan{}, ActivationPlan{},
                          DensePlan{3},  BatchNormPlan{}, ActivationPlan{}};
    cfg.train.lr = 0.01;
    cfg.train.epochs = 60;
    cfg.train.batch_size = 64;
    cfg.data.synthetic.per_class = 1000;
    cfg.data.synthetic.seed = 11;
    return cfg;
}

DenseVector parse_vector(const std::string& text) {
    DenseVector v;
    std::string_view rest(text);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        auto field = rest.substr(0, comma);
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
        double x = 0.0;
        const auto r = std::from_chars(field.data(), field.data() + field.size(), x);
        if (field.empty() || r.ec != std::errc() || r.ptr != field.data() + field.size())
            throw UsageError("bad number '" + std::string(field) + "' in vector '" + text + "'");
        v.push_back(x);
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
    }
    if (v.empty()) throw UsageError("empty vector");
    return v;
}

json matrix_rows(const DenseMatrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(m.row_copy(r));
    return rows;
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

std::string fixed(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

double median(std::vector<double> v) {
    std::ranges::sort(v);
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class Session {
public:
    Session(std::string command, const Options& opts, std::ostream& out)
        : command_(std::move(command)), opts_(opts), out_(out) {
        cfg_ = opts.config.empty() ? default_config() : load_config(opts.config);
        if (opts.seed) {
            cfg_.seed = *opts.seed;
            cfg_.data.synthetic.seed = *opts.seed;
        }
        cfg_.train.seed = cfg_.seed;
        if (!opts.out.empty()) {
            out_dir_ = opts.out;
        } else if (const char* env = std::getenv("MASOLAB_OUT"); env != nullptr && *env != '\0') {
            out_dir_ = env;
        } else if (!cfg_.output_dir.empty()) {
            out_dir_ = cfg_.output_dir;
        } else {
            out_dir_ = "out";
        }
    }

    const ExperimentConfig& cfg() const { return cfg_; }
    const Options& opts() const { return opts_; }
    const fs::path& out_dir() const { return out_dir_; }
    std::ostream& out() { return out_; }

    fs::path path(const std::string& name) const { return out_dir_ / name; }

    void emit(json record) {
        record["command"] = command_;
        records_.push_back(std::move(record));
    }

    void flush() const {
        std::string text;
        for (const auto& r : records_) text += r.dump() + "\n";
        write_text_file(path(command_ + ".jsonl"), text);
    }

    // Explicit --model, then the config's model, then a model trained into
    // the output directory, else a fresh network from the config.
    Network network() {
        fs::path source;
        if (!opts_.model.empty()) source = opts_.model;
        else if (!cfg_.model.empty()) source = cfg_.model;
        else if (fs::exists(path("model.json"))) source = path("model.json");
        Network net;
        if (source.empty()) {
            net = build_network(cfg_.network, cfg_.seed);
            out_ << "model: untrained network from config (seed " << cfg_.seed << ")\n";
        } else {
            net = load_model(source);
            out_ << "model: " << source.string() << "\n";
        }
        set_batchnorm_mode(net, BatchNormMode::Infer);
        return net;
    }

    const Dataset& data() {
        if (!data_) data_ = load_dataset(cfg_.data);
        return *data_;
    }

    std::size_t level(const Network& net) const {
        const auto levels = level_count(net);
        const auto l = opts_.level.value_or(cfg_.analysis.level);
        if (l == 0) {
            if (levels == 0) throw DomainError("the network has no nonlinear level");
            return levels;
        }
        if (l > levels)
            throw DomainError("level " + std::to_string(l) + " exceeds the level count " +
                              std::to_string(levels));
        return l;
    }

    SignatureScope scope() const {
        if (opts_.scope == "cumulative") return SignatureScope::Cumulative;
        if (opts_.scope == "level") return SignatureScope::LevelOnly;
        throw UsageError("--scope must be 'cumulative' or 'level'");
    }

    Grid2DSpec grid() const {
        const double e = cfg_.analysis.extent;
        const auto n = opts_.resolution.value_or(cfg_.analysis.resolution);
        return {-e, e, -e, e, n, n};
    }

    std::size_t samples() const { return opts_.samples.value_or(cfg_.analysis.samples); }

private:
    std::string command_;
    const Options& opts_;
    std::ostream& out_;
    ExperimentConfig cfg_;
    fs::path out_dir_;
    std::optional<Dataset> data_;
    std::vector<json> records_;
};

std::vector<DenseVector> first_inputs(const Dataset& data, std::size_t n) {
    n = std::min(n, data.size());
    return {data.inputs.begin(), data.inputs.begin() + static_cast<std::ptrdiff_t>(n)};
}

std::optional<std::pair<std::size_t, std::size_t>> image_extent(const Network& net) {
    const auto& s = net.input_shape;
    if (s.channels == 1 && s.height > 1 && s.width > 1) return std::pair{s.height, s.width};
    return std::nullopt;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(Session& s) {
    const auto& data = s.data();
    const auto p = s.path("data.csv");
    save_csv(data, p);
    s.emit({{"points", data.size()}, {"dim", data.dim()}, {"classes", data.classes}, {"path", p.string()}});
    s.out() << "generated " << data.size() << " points (dim " << data.dim() << ", " << data.classes
            << " classes) -> " << p.string() << "\n";
    return kExitOk;
}

int cmd_train(Session& s) {
    auto net = build_network(s.cfg().network, s.cfg().seed);
    auto tc = s.cfg().train;
    if (s.opts().epochs) tc.epochs = *s.opts().epochs;
    const auto& data = s.data();
    const auto history = train(net, data, tc);
    for (const auto& e : history.epochs)
        s.emit({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}, {"penalty", e.penalty}});
    const auto p = s.path("model.json");
    save_model(net, p, s.cfg().seed);
    const auto ev = evaluate(net, data, tc.loss);
    s.emit({{"final_loss", ev.loss},
            {"final_accuracy", ev.accuracy},
            {"epochs", tc.epochs},
            {"single_class", history.single_class},
            {"fingerprint", fingerprint_hex(fingerprint(net))},
            {"model", p.string()}});
    s.out() << "trained " << tc.epochs << " epochs on " << data.size() << " points: loss "
            << fixed(ev.loss) << ", accuracy " << fixed(100.0 * ev.accuracy, 2) << "%\n"
            << "model -> " << p.string() << "\n";
    return kExitOk;
}

int cmd_eval(Session& s) {
    const auto net = s.network();
    const auto& data = s.data();
    const auto ev = evaluate(net, data, s.cfg().train.loss);
    s.emit({{"loss", ev.loss}, {"accuracy", ev.accuracy}, {"points", data.size()}});
    s.out() << "loss " << fixed(ev.loss) << ", accuracy " << fixed(100.0 * ev.accuracy, 2) << "% on "
            << data.size() << " points\n";
    return kExitOk;
}

int cmd_decompose(Session& s) {
    const auto net = s.network();
    std::vector<DenseVector> xs;
    for (const auto& text : s.opts().inputs) xs.push_back(parse_vector(text));
    if (xs.empty()) xs = first_inputs(s.data(), s.samples());
    const auto levels = level_count(net);
    double worst = 0.0;
    for (std::size_t n = 0; n < xs.size(); ++n) {
        if (xs[n].size() != net.input_dim())
            throw UsageError("input " + std::to_string(n) + " has dimension " + std::to_string(xs[n].size()) +
                             ", the network expects " + std::to_string(net.input_dim()));
        const auto trace = forward(net, xs[n]);
        const auto dec = decompose(net, trace);
        const auto recon = add(gemv(dec.A, xs[n]), dec.b);
        const double residual = max_abs_diff(trace.logits, recon);
        worst = std::max(worst, residual);
        json rec{{"index", n},     {"x", xs[n]},       {"logits", trace.logits}, {"A", matrix_rows(dec.A)},
                 {"b", dec.b},     {"residual", residual}, {"tie", trace.any_tie()}};
        if (levels > 0) rec["signature"] = signature(net, trace, levels).hex();
        s.emit(std::move(rec));
    }
    s.out() << "decomposed " << xs.size() << " inputs; max |f(x) - (A x + b)| = " << sci(worst) << "\n";
    return kExitOk;
}

int cmd_verify(Session& s) {
    constexpr double kTolerance = 1e-9;
    const auto net = s.network();
    const auto& data = s.data();
    auto xs = first_inputs(data, s.samples());
    CounterRng rng = CounterRng(s.cfg().seed).split(0x7e1f);
    const double e = s.cfg().analysis.extent;
    for (std::size_t n = 0, m = xs.size(); n < m; ++n) {
        DenseVector x(net.input_dim());
        for (double& v : x) v = rng.uniform(-e, e);
        xs.push_back(std::move(x));
    }
    double worst = 0.0;
    std::size_t checks = 0, mismatches = 0, ties = 0;
    for (const auto& x : xs) {
        const auto trace = forward(net, x);
        const auto dec = decompose(net, trace);
        worst = std::max(worst, max_abs_diff(trace.logits, add(gemv(dec.A, x), dec.b)));
        if (trace.any_tie()) {
            ++ties;
            continue;
        }
        for (std::size_t c = 0; c < net.classes(); ++c) {
            ++checks;
            if (input_gradient(net, x, c) != dec.A.row_copy(c)) ++mismatches;
        }
    }
    const bool pass = worst <= kTolerance && mismatches == 0;
    s.emit({{"inputs", xs.size()},
            {"max_residual", worst},
            {"tolerance", kTolerance},
            {"gradient_checks", checks},
            {"gradient_mismatches", mismatches},
            {"ties_skipped", ties},
            {"pass", pass}});
    s.out() << "max residual: " << sci(worst) << " over " << xs.size() << " inputs (tolerance "
            << sci(kTolerance) << ")\n"
            << "gradient/template rows: " << checks - mismatches << "/" << checks << " bit-identical"
            << (ties > 0 ? " (" + std::to_string(ties) + " tied inputs skipped)" : std::string()) << "\n"
            << (pass ? "verify: PASS\n" : "verify: FAIL\n");
    return pass ? kExitOk : kExitVerification;
}

void write_histogram_csv(const fs::path& p, const std::vector<std::pair<std::string, Histogram>>& series) {
    std::string text = "series,bin_lo,bin_hi,count\n";
    for (const auto& [name, h] : series) {
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
            const double lo = h.lo + h.bin_width() * static_cast<double>(b);
            text += name + "," + std::to_string(lo) + "," + std::to_string(lo + h.bin_width()) + "," +
                    std::to_string(h.counts[b]) + "\n";
        }
    }
    write_text_file(p, text);
}

int cmd_templates(Session& s) {
    const auto net = s.network();
    const auto stats = template_stats(net, s.data(), s.cfg().analysis.bins);
    write_histogram_csv(s.path("templates.csv"), {{"correct", stats.correct_hist},
                                                  {"incorrect", stats.incorrect_hist},
                                                  {"cosine", stats.cosine_hist}});
    const std::vector<HistogramSeries> corr{{"correct class", stats.correct_hist, "#1f77b4"},
                                            {"other classes", stats.incorrect_hist, "#d62728"}};
    write_text_file(s.path("templates.svg"), render_histogram_svg(corr, "<template, x>"));
    const std::vector<HistogramSeries> cos{{"template cosines", stats.cosine_hist, "#2ca02c"}};
    write_text_file(s.path("template_cosines.svg"), render_histogram_svg(cos, "pairwise template cosine"));
    s.emit({{"correct_mean", stats.correct_mean},
            {"incorrect_mean", stats.incorrect_mean},
            {"mean_cosine", stats.mean_cosine},
            {"examples", stats.correct.size()},
            {"correct_hist", {{"lo", stats.correct_hist.lo}, {"hi", stats.correct_hist.hi}, {"counts", stats.correct_hist.counts}}},
            {"incorrect_hist", {{"lo", stats.incorrect_hist.lo}, {"hi", stats.incorrect_hist.hi}, {"counts", stats.incorrect_hist.counts}}},
            {"cosine_hist", {{"lo", stats.cosine_hist.lo}, {"hi", stats.cosine_hist.hi}, {"counts", stats.cosine_hist.counts}}}});
    s.out() << "mean <template_y, x> = " << fixed(stats.correct_mean) << ", mean <template_c, x> (c != y) = "
            << fixed(stats.incorrect_mean) << ", mean pairwise cosine = " << fixed(stats.mean_cosine) << "\n"
            << "histograms -> " << s.path("templates.svg").string() << ", " << s.path("templates.csv").string()
            << "\n";
    return kExitOk;
}

int report_partition(Session& s, const Network& net, const PartitionStats& stats, std::size_t level,
                     const std::string& csv_name, const std::string& what) {
    std::string csv = "rank,signature,count\n";
    for (std::size_t r = 0; r < stats.occupancy.size(); ++r) {
        const auto& e = stats.occupancy[r];
        csv += std::to_string(r) + "," + e.signature.hex() + "," + std::to_string(e.count) + "\n";
        s.emit({{"rank", r}, {"signature", e.signature.hex()}, {"count", e.count}});
    }
    write_text_file(s.path(csv_name), csv);
    const bool within = BigInt(stats.unique()) <= stats.theoretical_max;
    s.emit({{"level", level},
            {"scope", s.opts().scope},
            {"samples", stats.samples},
            {"unique", stats.unique()},
            {"upper_bound", stats.theoretical_max.str()},
            {"level_upper_bound", level_region_count_upper_bound(net, level).str()},
            {"within_bound", within}});
    s.out() << what << ": " << stats.unique() << " unique signatures at level " << level << " over "
            << stats.samples << " points (upper bound " << stats.theoretical_max.str() << ")\n";
    if (!stats.occupancy.empty())
        s.out() << "largest region holds " << stats.occupancy.front().count << " points\n";
    return within ? kExitOk : kExitVerification;
}

int cmd_partition(Session& s) {
    const auto net = s.network();
    if (net.input_dim() != 2) throw DimensionError("partition needs a network with 2-D input");
    const auto level = s.level(net);
    const auto stats = estimate_partition(net, s.grid(), level, s.scope());
    return report_partition(s, net, stats, level, "partition.csv", "grid partition");
}

int cmd_occupancy(Session& s) {
    const auto net = s.network();
    const auto level = s.level(net);
    const auto stats = occupancy(net, s.data(), level, s.scope());
    return report_partition(s, net, stats, level, "occupancy.csv", "data occupancy");
}

int cmd_vq_dist(Session& s) {
    const auto net = s.network();
    DenseVector a, b;
    if (!s.opts().a.empty() || !s.opts().b.empty()) {
        if (s.opts().a.empty() || s.opts().b.empty()) throw UsageError("--a and --b go together");
        a = parse_vector(s.opts().a);
        b = parse_vector(s.opts().b);
    } else {
        const auto& data = s.data();
        if (s.opts().i >= data.size() || s.opts().j >= data.size())
            throw UsageError("--i/--j exceed the data set size " + std::to_string(data.size()));
        a = data.inputs[s.opts().i];
        b = data.inputs[s.opts().j];
    }
    const auto levels = level_count(net);
    if (levels == 0) throw DomainError("the network has no nonlinear level");
    const auto sa = signature_at(net, a, levels);
    const auto sb = signature_at(net, b, levels);
    for (std::size_t l = 1; l <= levels; ++l) {
        const double d = vq_distance(sa, sb, l);
        s.emit({{"level", l}, {"distance", d}});
        s.out() << "level " << l << ": " << fixed(d) << "\n";
    }
    const double mean = vq_distance_mean(sa, sb);
    s.emit({{"level", "mean"}, {"distance", mean}, {"a", a}, {"b", b}, {"euclidean", norm2(subtract(a, b))}});
    s.out() << "mean over levels: " << fixed(mean) << "\n";
    return kExitOk;
}

std::vector<std::size_t> query_ids(std::size_t n, std::size_t q) {
    q = std::min(q, n);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < q; ++i) ids.push_back(i * n / q);
    return ids;
}

// Query followed by its k nearest neighbors (query excluded) per query id.
std::vector<std::vector<Neighbor>> retrieve_all(const Network& net, const VqCorpus& corpus,
                                                const std::vector<std::size_t>& ids, std::size_t level,
                                                std::size_t k) {
    std::vector<std::vector<Neighbor>> out;
    for (auto id : ids) {
        const auto query = make_query(net, corpus.items[id].x);
        auto hits = nearest_neighbors(corpus, query, level, k + 1);
        std::erase_if(hits, [&](const Neighbor& h) { return h.id == id; });
        if (hits.size() > k) hits.resize(k);
        out.push_back(std::move(hits));
    }
    return out;
}

std::string neighbor_grid(const Dataset& data, const std::vector<std::size_t>& ids,
                          const std::vector<std::vector<Neighbor>>& hits, std::size_t h, std::size_t w) {
    std::vector<std::vector<DenseVector>> rows;
    for (std::size_t q = 0; q < ids.size(); ++q) {
        std::vector<DenseVector> row{data.inputs[ids[q]]};
        for (const auto& n : hits[q]) row.push_back(data.inputs[n.id]);
        rows.push_back(std::move(row));
    }
    return render_neighbor_grid_svg(rows, h, w);
}

int cmd_retrieve(Session& s) {
    const auto net = s.network();
    const auto& data = s.data();
    const auto corpus = build_corpus(net, data.inputs, data.labels);
    const auto ids = query_ids(data.size(), s.opts().queries.value_or(s.cfg().analysis.queries));
    const auto k = s.opts().k.value_or(s.cfg().analysis.neighbors);
    const auto levels = level_count(net);
    const auto extent = image_extent(net);
    for (std::size_t level = 0; level <= levels; ++level) {
        const auto hits = retrieve_all(net, corpus, ids, level, k);
        std::size_t same = 0, total = 0;
        for (std::size_t q = 0; q < ids.size(); ++q) {
            json list = json::array();
            for (const auto& n : hits[q]) {
                const auto label = data.labels[n.id];
                same += label == data.labels[ids[q]] ? 1 : 0;
                ++total;
                list.push_back({{"id", n.id}, {"distance", n.distance}, {"euclidean", n.euclidean}, {"label", label}});
            }
            s.emit({{"level", level}, {"query", ids[q]}, {"label", data.labels[ids[q]]}, {"neighbors", list}});
        }
        const double agree = total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
        s.emit({{"level", level}, {"label_agreement", agree}});
        s.out() << (level == 0 ? std::string("mean over levels") : "level " + std::to_string(level))
                << ": neighbor label agreement " << fixed(100.0 * agree, 1) << "%\n";
        if (extent) {
            const auto name = "retrieve_level" + std::to_string(level) + ".svg";
            write_text_file(s.path(name), neighbor_grid(data, ids, hits, extent->first, extent->second));
        }
    }
    return kExitOk;
}

int cmd_kmeans(Session& s) {
    const auto& data = s.data();
    const auto R = s.opts().clusters.value_or(s.cfg().analysis.clusters);
    const auto iters = s.opts().iterations.value_or(s.cfg().analysis.iterations);
    const auto result = lloyd(data.inputs, R, iters, s.cfg().seed);
    bool monotone = true;
    for (std::size_t t = 1; t < result.objective.size(); ++t) {
        const double prev = result.objective[t - 1];
        if (result.objective[t] > prev + 1e-12 * std::max(1.0, prev)) monotone = false;
    }
    const auto p = kmeans_maso(result.centroids);
    const auto on_data = check_voronoi_equiv(p, data.inputs);
    const double e = s.cfg().analysis.extent;
    const auto on_box = check_voronoi_equiv(p, 1000, s.cfg().seed, -e, e);
    const auto report = [](const VoronoiReport& r) {
        return json{{"samples", r.samples}, {"checked", r.checked}, {"near_ties", r.near_ties}, {"mismatches", r.mismatches}};
    };
    const bool pass = monotone && on_data.mismatches == 0 && on_box.mismatches == 0;
    json centroids = json::array();
    for (const auto& mu : result.centroids.mu) centroids.push_back(mu);
    s.emit({{"clusters", R},
            {"iterations", result.iterations},
            {"converged", result.converged},
            {"objective", result.objective},
            {"objective_monotone", monotone},
            {"centroids", centroids},
            {"voronoi_data", report(on_data)},
            {"voronoi_uniform", report(on_box)},
            {"pass", pass}});
    s.out() << "lloyd: " << R << " clusters, " << result.iterations << " iterations"
            << (result.converged ? " (converged)" : "") << ", objective "
            << (result.objective.empty() ? std::string("n/a") : fixed(result.objective.back())) << "\n"
            << "MASO argmax vs nearest centroid: " << on_data.mismatches + on_box.mismatches << " mismatches over "
            << on_data.checked + on_box.checked << " checks (" << on_data.near_ties + on_box.near_ties
            << " near ties skipped)\n"
            << (pass ? "kmeans: PASS\n" : "kmeans: FAIL\n");
    return pass ? kExitOk : kExitVerification;
}

int cmd_lipschitz(Session& s) {
    const auto net = s.network();
    const auto table = operator_lipschitz_table(net);
    for (const auto& e : table.entries) {
        s.emit({{"layer", e.name}, {"maso_bound", e.maso_bound}, {"operator_bound", e.operator_bound}, {"used", e.used}});
        s.out() << e.name << ": maso " << sci(e.maso_bound) << ", operator " << sci(e.operator_bound) << "\n";
    }
    const double empirical =
        empirical_lipschitz_ratio(net, s.opts().pairs, s.cfg().seed, s.cfg().analysis.extent);
    const auto C = net.classes();
    const auto soft = softmax_lipschitz_max(C, s.cfg().seed);
    const double closed_form = static_cast<double>(C - 1) / static_cast<double>(C * C);
    const bool pass = empirical <= table.product * (1.0 + 1e-9);
    s.emit({{"product", table.product},
            {"product_with_softmax", table.product_with_softmax},
            {"empirical_ratio", empirical},
            {"pairs", s.opts().pairs},
            {"softmax_numeric_max", soft.value},
            {"softmax_maximizer", soft.maximizer},
            {"softmax_uniform", soft.uniform_value},
            {"softmax_closed_form", closed_form},
            {"pass", pass}});
    s.out() << "product bound " << sci(table.product) << ", empirical max ratio " << sci(empirical) << " over "
            << s.opts().pairs << " pairs\n"
            << "softmax (C=" << C << "): numeric max " << fixed(soft.value, 6) << ", at uniform "
            << fixed(soft.uniform_value, 6) << ", (C-1)/C^2 = " << fixed(closed_form, 6) << "\n"
            << (pass ? "lipschitz: PASS\n" : "lipschitz: FAIL\n");
    return pass ? kExitOk : kExitVerification;
}

int cmd_collinear(Session& s) {
    constexpr double kDeviation = 1e-3;
    constexpr double kKkt = 1e-10;
    CounterRng rng(s.cfg().seed);
    bool all = true;
    std::size_t n = 0;
    for (const auto& text : s.opts().cases) {
        const auto colon = text.find(':');
        if (colon == std::string::npos) throw UsageError("--case expects C:alpha, got '" + text + "'");
        const auto v = parse_vector(text.substr(0, colon) + "," + text.substr(colon + 1));
        if (v[0] < 2 || v[0] != std::floor(v[0])) throw UsageError("C must be an integer >= 2");
        const auto C = static_cast<std::size_t>(v[0]);
        const double alpha = v[1];
        DenseVector x(s.opts().dim);
        for (double& e : x) e = rng.normal();
        x = scaled(x, 1.0 / norm2(x));
        const std::size_t y = n++ % C;
        json rec{{"classes", C}, {"alpha", alpha}, {"true_class", y}, {"x", x}};
        bool pass = false;
        try {
            const auto r = collinear_optimize(x, y, C, alpha, 1e-10, 200000, s.cfg().seed + n);
            pass = r.max_deviation <= kDeviation && r.kkt_closed_form.gradient <= kKkt &&
                   r.kkt_closed_form.constraint <= kKkt;
            rec["max_deviation"] = r.max_deviation;
            rec["iterations"] = r.iterations;
            rec["kkt_closed_form"] = {{"gradient", r.kkt_closed_form.gradient},
                                      {"constraint", r.kkt_closed_form.constraint},
                                      {"lambda", r.kkt_closed_form.lambda}};
            rec["kkt_optimized"] = {{"gradient", r.kkt_optimized.gradient},
                                    {"constraint", r.kkt_optimized.constraint}};
            rec["true_scale"] = std::sqrt(static_cast<double>(C - 1) * alpha / static_cast<double>(C));
            rec["other_scale"] = -std::sqrt(alpha / static_cast<double>(C * (C - 1)));
            s.out() << "C=" << C << " alpha=" << alpha << ": deviation " << sci(r.max_deviation)
                    << ", KKT residual at closed form " << sci(r.kkt_closed_form.gradient) << " ("
                    << r.iterations << " iterations) " << (pass ? "PASS" : "FAIL") << "\n";
        } catch (const ConvergenceError& e) {
            rec["error"] = e.what();
            s.out() << "C=" << C << " alpha=" << alpha << ": " << e.what() << " FAIL\n";
        }
        rec["pass"] = pass;
        all = all && pass;
        s.emit(std::move(rec));
    }
    return all ? kExitOk : kExitVerification;
}

int cmd_universal(Session& s) {
    const auto& widths = s.opts().widths;
    if (widths.empty() || !std::ranges::is_sorted(widths) || widths.front() == 0)
        throw UsageError("--widths must be positive and ascending");
    if (s.opts().seeds == 0) throw UsageError("--seeds must be >= 1");
    const TargetMap target = [](std::span<const double> x) {
        return DenseVector{x[0] * x[0] + x[1] * x[1]};
    };
    std::map<std::size_t, std::vector<double>> errors;
    bool diverged = false;
    for (std::size_t k = 0; k < s.opts().seeds; ++k) {
        UniversalityConfig u;
        u.widths = widths;
        u.train_samples = s.opts().train_samples;
        u.seed = s.cfg().seed + k;
        u.train = s.cfg().train;
        u.train.loss = LossKind::MeanSquared;
        u.train.epochs = s.opts().epochs.value_or(200);
        u.train.batch_size = s.opts().batch;
        u.train.lambda_ortho = 0.0;
        u.train.seed = u.seed;
        for (const auto& w : universality_experiment(target, u)) {
            s.emit({{"seed", u.seed}, {"width", w.width}, {"train_mse", w.train_mse}, {"test_mse", w.test_mse}, {"diverged", w.diverged}});
            errors[w.width].push_back(w.test_mse);
            diverged = diverged || w.diverged;
        }
    }
    for (const auto& [w, errs] : errors)
        s.out() << "width " << w << ": median test MSE " << sci(median(errs)) << "\n";
    const double narrow = median(errors[widths.front()]);
    const double wide = median(errors[widths.back()]);
    const bool pass = !diverged && wide < narrow;
    s.emit({{"narrowest", widths.front()}, {"widest", widths.back()}, {"median_narrowest", narrow},
            {"median_widest", wide}, {"diverged", diverged}, {"pass", pass}});
    s.out() << (pass ? "universal: PASS" : "universal: FAIL") << " (error shrinks from width " << widths.front()
            << " to " << widths.back() << ": " << (wide < narrow ? "yes" : "no") << ")\n";
    return pass ? kExitOk : kExitVerification;
}

int cmd_soft_maso(Session& s) {
    const auto n = std::max<std::size_t>(s.opts().samples.value_or(2001), 2);
    const auto relu = make_activation_maso(ActivationKind::ReLU, 1);
    double err_half = 0.0, err_hard = 0.0, err_avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = -10.0 + 20.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        const DenseVector x{u};
        const double swish = u / (1.0 + std::exp(-u));
        err_half = std::max(err_half, std::abs(maso_eval_soft(relu, x, {0.5})[0] - swish));
        err_hard = std::max(err_hard, std::abs(maso_eval_soft(relu, x, {0.999})[0] - std::max(u, 0.0)));
        err_avg = std::max(err_avg, std::abs(maso_eval_soft(relu, x, {1e-12})[0] - 0.5 * u));
    }
    const bool pass = err_half <= 1e-12 && err_hard <= 1e-3 && err_avg <= 1e-9;
    s.emit({{"grid_points", n},
            {"beta_half_vs_swish", err_half},
            {"beta_0999_vs_hard", err_hard},
            {"beta_small_vs_average", err_avg},
            {"pass", pass}});
    s.out() << "beta=0.5 vs u*sigmoid(u): " << sci(err_half) << " (tol 1e-12)\n"
            << "beta=0.999 vs hard max: " << sci(err_hard) << " (tol 1e-3)\n"
            << "beta=1e-12 vs piece average: " << sci(err_avg) << " (tol 1e-9)\n"
            << (pass ? "soft-maso: PASS\n" : "soft-maso: FAIL\n");
    return pass ? kExitOk : kExitVerification;
}

int cmd_bias_ablation(Session& s) {
    const auto net = s.network();
    const auto r = bias_ablation_eval(net, s.data());
    s.emit({{"full_accuracy", r.full_accuracy}, {"template_only_accuracy", r.template_only_accuracy}});
    s.out() << "accuracy with biases " << fixed(100.0 * r.full_accuracy, 2) << "%, templates only "
            << fixed(100.0 * r.template_only_accuracy, 2) << "%\n";
    return kExitOk;
}

int cmd_render(Session& s) {
    const auto& o = s.opts();
    if (int(o.partition) + int(o.histogram) + int(o.neighbor_grid) != 1)
        throw UsageError("render needs exactly one of --partition, --histogram, --neighbor-grid");
    const auto net = s.network();
    fs::path p;
    if (o.partition) {
        if (net.input_dim() != 2) throw DimensionError("--partition needs a network with 2-D input");
        const auto level = s.level(net);
        const auto raster = raster_partition(net, s.grid(), level, s.scope());
        const std::set<std::uint64_t> colors(raster.cells.begin(), raster.cells.end());
        p = s.path("partition_level" + std::to_string(level) + ".svg");
        write_text_file(p, render_partition_svg(raster, o.points ? &s.data() : nullptr));
        s.emit({{"kind", "partition"}, {"level", level}, {"regions", colors.size()}, {"path", p.string()}});
        s.out() << "partition at level " << level << ": " << colors.size() << " regions";
    } else if (o.histogram) {
        const auto stats = template_stats(net, s.data(), s.cfg().analysis.bins);
        const std::vector<HistogramSeries> series{{"correct class", stats.correct_hist, "#1f77b4"},
                                                  {"other classes", stats.incorrect_hist, "#d62728"}};
        p = s.path("histogram.svg");
        write_text_file(p, render_histogram_svg(series, "<template, x>"));
        s.emit({{"kind", "histogram"}, {"path", p.string()}});
        s.out() << "template histogram";
    } else {
        const auto extent = image_extent(net);
        if (!extent) throw DimensionError("--neighbor-grid needs a single-channel image input");
        const auto& data = s.data();
        const auto corpus = build_corpus(net, data.inputs, data.labels);
        const auto ids = query_ids(data.size(), o.queries.value_or(s.cfg().analysis.queries));
        const auto level = s.level(net);
        const auto hits = retrieve_all(net, corpus, ids, level, o.k.value_or(s.cfg().analysis.neighbors));
        p = s.path("neighbors_level" + std::to_string(level) + ".svg");
        write_text_file(p, neighbor_grid(data, ids, hits, extent->first, extent->second));
        s.emit({{"kind", "neighbor-grid"}, {"level", level}, {"queries", ids.size()}, {"path", p.string()}});
        s.out() << "neighbor grid at level " << level;
    }
    s.out() << " -> " << p.string() << "\n";
    return kExitOk;
}

using Command = std::function<int(Session&)>;

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Max-affine spline analysis of piecewise-affine networks", "masolab"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");
    Options o;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the experiment and data seeds");
        sub->add_option("--out", o.out, "Output directory (default: $MASOLAB_OUT, config output_dir, ./out)");
        return sub;
    };
    const auto with_model = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "Saved model (default: config model, then <out>/model.json)");
        return sub;
    };
    const auto with_level = [&](CLI::App* sub) {
        sub->add_option("--level", o.level, "Level, 1-based (0: last level)");
        sub->add_option("--scope", o.scope, "Signature scope")->check(CLI::IsMember({"cumulative", "level"}));
        return sub;
    };

    std::vector<std::pair<CLI::App*, Command>> commands;
    const auto add = [&](const std::string& name, const std::string& help, Command fn) {
        auto* sub = common(app.add_subcommand(name, help));
        commands.emplace_back(sub, std::move(fn));
        return sub;
    };

    add("gen-data", "Generate or load the configured data set and write it as CSV", cmd_gen_data);
    add("train", "Train the configured network and save it to <out>/model.json", cmd_train)
        ->add_option("--epochs", o.epochs, "Override the epoch count");
    with_model(add("eval", "Loss and accuracy of a model on the configured data", cmd_eval));
    {
        auto* sub = with_model(add("decompose", "Affine decomposition A[x] x + b[x] of the logits", cmd_decompose));
        sub->add_option("--input", o.inputs, "Comma-separated input vector (repeatable)");
        sub->add_option("--samples", o.samples, "Data points to decompose when no --input is given");
    }
    with_model(add("verify", "Check the decomposition residual and the gradient/template identity", cmd_verify))
        ->add_option("--samples", o.samples, "Data points to check (as many random points are added)");
    with_model(add("templates", "Template correlation and cosine histograms", cmd_templates));
    {
        auto* sub = with_level(with_model(add("partition", "Signatures on a regular 2-D grid", cmd_partition)));
        sub->add_option("--resolution", o.resolution, "Grid points per axis");
    }
    with_level(with_model(add("occupancy", "Signature occupancy of the data set", cmd_occupancy)));
    {
        auto* sub = with_model(add("vq-dist", "VQ distance between two inputs at every level", cmd_vq_dist));
        sub->add_option("--a", o.a, "First input (comma-separated)");
        sub->add_option("--b", o.b, "Second input (comma-separated)");
        sub->add_option("--i", o.i, "First data index when --a/--b are absent");
        sub->add_option("--j", o.j, "Second data index when --a/--b are absent");
    }
    {
        auto* sub = with_model(add("retrieve", "Nearest neighbors by VQ distance", cmd_retrieve));
        sub->add_option("--k", o.k, "Neighbors per query");
        sub->add_option("--queries", o.queries, "Number of queries");
    }
    {
        auto* sub = add("kmeans", "Lloyd's algorithm and the k-means MASO Voronoi check", cmd_kmeans);
        sub->add_option("--clusters", o.clusters, "Number of centroids");
        sub->add_option("--iterations", o.iterations, "Maximum Lloyd iterations");
    }
    with_model(add("lipschitz", "Layer and network Lipschitz bounds", cmd_lipschitz))
        ->add_option("--pairs", o.pairs, "Random pairs for the empirical ratio");
    {
        auto* sub = add("collinear", "Cross-entropy optimal templates under a norm budget", cmd_collinear);
        sub->add_option("--case", o.cases, "C:alpha (repeatable)");
        sub->add_option("--dim", o.dim, "Input dimension")->check(CLI::PositiveNumber);
    }
    {
        auto* sub = add("universal", "Approximation error versus width on x1^2 + x2^2", cmd_universal);
        sub->add_option("--widths", o.widths, "Ascending hidden widths")->delimiter(',');
        sub->add_option("--seeds", o.seeds, "Independent runs (medians are compared)");
        sub->add_option("--epochs", o.epochs, "Epochs per run (default 200)");
        sub->add_option("--batch", o.batch, "Batch size")->check(CLI::PositiveNumber);
        sub->add_option("--train-samples", o.train_samples, "Training samples")->check(CLI::PositiveNumber);
    }
    add("soft-maso", "Entropy-regularized MASO limits", cmd_soft_maso)
        ->add_option("--samples", o.samples, "Grid points on [-10, 10]");
    with_model(add("bias-ablation", "Accuracy with and without the template biases", cmd_bias_ablation));
    {
        auto* sub = with_level(with_model(add("render", "Write an SVG figure", cmd_render)));
        sub->add_flag("--partition", o.partition, "Partition raster of a 2-D network");
        sub->add_flag("--histogram", o.histogram, "Template correlation histogram");
        sub->add_flag("--neighbor-grid", o.neighbor_grid, "Query/neighbor image grid");
        sub->add_flag("--points", o.points, "Overlay the data on the partition");
        sub->add_option("--resolution", o.resolution, "Grid points per axis");
        sub->add_option("--k", o.k, "Neighbors per query");
        sub->add_option("--queries", o.queries, "Number of queries");
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    for (auto& [sub, fn] : commands) {
        if (!sub->parsed()) continue;
        try {
            Session session(sub->get_name(), o, out);
            const int code = fn(session);
            session.flush();
            return code;
        } catch (const UsageError& e) {
            err << "error: " << e.what() << "\n" << sub->help();
            return kExitUsage;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kExitUsage;
        }
    }
    return kExitUsage;
}

}  // namespace masolab
