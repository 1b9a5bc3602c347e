#include <algorithm>
#include <set>

#include "json.hpp"
#include "internal.hpp"
#include "masolab/errors.hpp"
#include "masolab/io.hpp"

namespace masolab {

using nlohmann::json;
using detail::overloaded;

namespace {

// Optional-field reader that rejects keys outside `allowed`.
class Section {
public:
    Section(const json& j, std::string where, std::set<std::string> allowed)
        : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
        for (const auto& [key, _] : j_.items()) {
            if (!allowed.contains(key)) fail("unknown key '" + key + "'");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(where_ + ": " + msg); }
    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string sub(const char* key) const { return where_ + "/" + key; }

    void str(const char* key, std::string& out) const {
        if (!has(key)) return;
        if (!raw(key).is_string()) fail(std::string("'") + key + "' must be a string");
        out = raw(key).get<std::string>();
    }
    void num(const char* key, double& out) const {
        if (!has(key)) return;
        if (!raw(key).is_number()) fail(std::string("'") + key + "' must be a number");
        out = raw(key).get<double>();
    }
    template <class T>
    void count(const char* key, T& out) const {
        if (!has(key)) return;
        if (!raw(key).is_number_unsigned()) fail(std::string("'") + key + "' must be a nonnegative integer");
        out = raw(key).get<T>();
    }
    void flag(const char* key, bool& out) const {
        if (!has(key)) return;
        if (!raw(key).is_boolean()) fail(std::string("'") + key + "' must be a boolean");
        out = raw(key).get<bool>();
    }
    std::vector<std::size_t> counts(const char* key, std::size_t n) const {
        const auto& v = raw(key);
        if (!v.is_array() || v.size() != n)
            fail(std::string("'") + key + "' must be an array of " + std::to_string(n) + " integers");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_unsigned() || e.get<std::size_t>() == 0)
                fail(std::string("'") + key + "' entries must be positive integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }
    template <class E>
    void choice(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> options) const {
        if (!has(key)) return;
        std::string s;
        str(key, s);
        for (const auto& [name, value] : options) {
            if (s == name) {
                out = value;
                return;
            }
        }
        fail("'" + std::string(key) + "' has unsupported value '" + s + "'");
    }

private:
    const json& j_;
    std::string where_;
};

constexpr std::initializer_list<std::pair<const char*, ActivationKind>> kActivations = {
    {"relu", ActivationKind::ReLU}, {"leaky_relu", ActivationKind::LeakyReLU}, {"abs", ActivationKind::Abs}};

const char* activation_name(ActivationKind k) {
    for (const auto& [name, v] : kActivations) {
        if (v == k) return name;
    }
    return "relu";
}

LayerPlan plan_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw FormatError(where + ": layer needs a string 'type'");
    const auto type = j["type"].get<std::string>();
    if (type == "dense") {
        Section s(j, where, {"type", "units"});
        DensePlan p;
        s.count("units", p.units);
        if (p.units == 0) s.fail("'units' must be >= 1");
        return p;
    }
    if (type == "conv") {
        Section s(j, where, {"type", "out_channels", "kernel", "padding", "stride"});
        ConvPlan p;
        s.count("out_channels", p.out_channels);
        s.count("kernel", p.kernel);
        s.choice("padding", p.padding, {{"valid", Padding::Valid}, {"same", Padding::Same}});
        if (s.has("stride")) {
            const auto st = s.counts("stride", 2);
            p.stride = {st[0], st[1]};
        }
        if (p.out_channels == 0 || p.kernel == 0) s.fail("'out_channels' and 'kernel' must be >= 1");
        return p;
    }
    if (type == "activation") {
        Section s(j, where, {"type", "activation", "leak"});
        ActivationPlan p;
        s.choice("activation", p.kind, kActivations);
        s.num("leak", p.leak);
        if (p.kind == ActivationKind::LeakyReLU && !(p.leak > 0.0)) s.fail("'leak' must be > 0");
        return p;
    }
    if (type == "pool") {
        Section s(j, where, {"type", "pool", "axis", "window", "stride"});
        PoolPlan p;
        s.choice("pool", p.kind, {{"max", PoolKind::Max}, {"average", PoolKind::Average}});
        s.choice("axis", p.axis, {{"spatial", PoolAxis::Spatial}, {"channel", PoolAxis::Channel}});
        if (s.has("window")) {
            const auto w = s.counts("window", 2);
            p.window = {w[0], w[1]};
        }
        if (s.has("stride")) {
            const auto st = s.counts("stride", 2);
            p.stride = {st[0], st[1]};
        }
        return p;
    }
    if (type == "batchnorm") {
        Section s(j, where, {"type", "eps", "momentum"});
        BatchNormPlan p;
        s.num("eps", p.eps);
        s.num("momentum", p.momentum);
        if (!(p.eps > 0.0)) s.fail("'eps' must be > 0");
        if (!(p.momentum >= 0.0 && p.momentum <= 1.0)) s.fail("'momentum' must lie in [0, 1]");
        return p;
    }
    if (type == "residual") {
        Section s(j, where, {"type", "activation", "leak", "skip"});
        ResidualPlan p;
        s.choice("activation", p.kind, kActivations);
        s.num("leak", p.leak);
        s.choice("skip", p.skip, {{"identity", SkipKind::Identity}, {"dense", SkipKind::Dense}});
        return p;
    }
    throw FormatError(where + ": unknown layer type '" + type + "'");
}

json plan_to_json(const LayerPlan& plan) {
    return std::visit(
        overloaded{
            [](const DensePlan& p) -> json { return {{"type", "dense"}, {"units", p.units}}; },
            [](const ConvPlan& p) -> json {
                return {{"type", "conv"},
                        {"out_channels", p.out_channels},
                        {"kernel", p.kernel},
                        {"padding", p.padding == Padding::Same ? "same" : "valid"},
                        {"stride", {p.stride.vertical, p.stride.horizontal}}};
            },
            [](const ActivationPlan& p) -> json {
                return {{"type", "activation"}, {"activation", activation_name(p.kind)}, {"leak", p.leak}};
            },
            [](const PoolPlan& p) -> json {
                return {{"type", "pool"},
                        {"pool", p.kind == PoolKind::Max ? "max" : "average"},
                        {"axis", p.axis == PoolAxis::Spatial ? "spatial" : "channel"},
                        {"window", {p.window.vertical, p.window.horizontal}},
                        {"stride", {p.stride.vertical, p.stride.horizontal}}};
            },
            [](const BatchNormPlan& p) -> json {
                return {{"type", "batchnorm"}, {"eps", p.eps}, {"momentum", p.momentum}};
            },
            [](const ResidualPlan& p) -> json {
                return {{"type", "residual"},
                        {"activation", activation_name(p.kind)},
                        {"leak", p.leak},
                        {"skip", p.skip == SkipKind::Dense ? "dense" : "identity"}};
            },
        },
        plan);
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed config JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    Section top(doc, "config", {"name", "seed", "output_dir", "model", "network", "train", "data", "analysis"});
    top.str("name", cfg.name);
    top.count("seed", cfg.seed);
    top.str("output_dir", cfg.output_dir);
    top.str("model", cfg.model);

    if (top.has("network")) {
        Section n(top.raw("network"), top.sub("network"), {"input_shape", "layers", "classes", "init"});
        if (n.has("input_shape")) {
            const auto s = n.counts("input_shape", 3);
            cfg.network.input_shape = {s[0], s[1], s[2]};
        }
        n.count("classes", cfg.network.classes);
        if (cfg.network.classes < 2) n.fail("'classes' must be >= 2");
        if (n.has("layers")) {
            const auto& layers = n.raw("layers");
            if (!layers.is_array()) n.fail("'layers' must be an array");
            for (std::size_t i = 0; i < layers.size(); ++i)
                cfg.network.layers.push_back(plan_from_json(layers[i], n.sub("layers") + "/" + std::to_string(i)));
        }
        if (n.has("init")) {
            Section s(n.raw("init"), n.sub("init"), {"weight_scale", "bias_scale", "nonnegative"});
            s.num("weight_scale", cfg.network.init.weight_scale);
            s.num("bias_scale", cfg.network.init.bias_scale);
            s.flag("nonnegative", cfg.network.init.nonnegative);
        }
    }

    if (top.has("train")) {
        Section t(top.raw("train"), top.sub("train"),
                  {"lr", "epochs", "batch_size", "optimizer", "adam", "loss", "lambda_ortho", "lr_decay"});
        auto& tc = cfg.train;
        t.num("lr", tc.lr);
        t.count("epochs", tc.epochs);
        t.count("batch_size", tc.batch_size);
        t.choice("optimizer", tc.optimizer, {{"sgd", Optimizer::Sgd}, {"adam", Optimizer::Adam}});
        t.choice("loss", tc.loss, {{"ce", LossKind::CrossEntropy}, {"mse", LossKind::MeanSquared}});
        t.num("lambda_ortho", tc.lambda_ortho);
        t.num("lr_decay", tc.lr_decay);
        if (t.has("adam")) {
            Section a(t.raw("adam"), t.sub("adam"), {"beta1", "beta2", "eps"});
            a.num("beta1", tc.adam_beta1);
            a.num("beta2", tc.adam_beta2);
            a.num("eps", tc.adam_eps);
        }
        try {
            validate(tc);
        } catch (const DomainError& e) {
            t.fail(e.what());
        }
    }
    cfg.train.seed = cfg.seed;

    if (top.has("data")) {
        const auto& d = top.raw("data");
        const std::string where = top.sub("data");
        if (!d.is_object() || !d.contains("source") || !d["source"].is_string())
            throw FormatError(where + ": needs a string 'source'");
        const auto source = d["source"].get<std::string>();
        auto& ds = cfg.data;
        if (source == "synthetic2d") {
            Section s(d, where, {"source", "classes", "per_class", "layout", "seed"});
            ds.source = DataSpec::Source::Synthetic2D;
            s.count("classes", ds.synthetic.classes);
            s.count("per_class", ds.synthetic.per_class);
            s.choice("layout", ds.synthetic.layout,
                     {{"rings+blobs", Layout2D::RingsAndBlobs}, {"blobs", Layout2D::Blobs}});
            s.count("seed", ds.synthetic.seed);
            if (ds.synthetic.per_class == 0) s.fail("'per_class' must be >= 1");
        } else if (source == "idx") {
            Section s(d, where, {"source", "images", "labels", "limit"});
            ds.source = DataSpec::Source::Idx;
            s.str("images", ds.images);
            s.str("labels", ds.labels);
            s.count("limit", ds.limit);
            if (ds.images.empty() || ds.labels.empty()) s.fail("'images' and 'labels' are required");
        } else if (source == "csv") {
            Section s(d, where, {"source", "path"});
            ds.source = DataSpec::Source::Csv;
            s.str("path", ds.path);
            if (ds.path.empty()) s.fail("'path' is required");
        } else {
            throw FormatError(where + ": unknown data source '" + source + "'");
        }
    }

    if (top.has("analysis")) {
        Section a(top.raw("analysis"), top.sub("analysis"),
                  {"level", "resolution", "extent", "samples", "neighbors", "queries", "clusters",
                   "iterations", "bins"});
        auto& as = cfg.analysis;
        a.count("level", as.level);
        a.count("resolution", as.resolution);
        a.num("extent", as.extent);
        a.count("samples", as.samples);
        a.count("neighbors", as.neighbors);
        a.count("queries", as.queries);
        a.count("clusters", as.clusters);
        a.count("iterations", as.iterations);
        a.count("bins", as.bins);
        if (as.resolution < 2) a.fail("'resolution' must be >= 2");
        if (!(as.extent > 0.0)) a.fail("'extent' must be > 0");
        if (as.bins == 0) a.fail("'bins' must be >= 1");
    }
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json doc;
    doc["name"] = cfg.name;
    doc["seed"] = cfg.seed;
    if (!cfg.output_dir.empty()) doc["output_dir"] = cfg.output_dir;
    if (!cfg.model.empty()) doc["model"] = cfg.model;
    const auto& n = cfg.network;
    json layers = json::array();
    for (const auto& p : n.layers) layers.push_back(plan_to_json(p));
    doc["network"] = {{"input_shape", {n.input_shape.channels, n.input_shape.height, n.input_shape.width}},
                      {"classes", n.classes},
                      {"layers", layers},
                      {"init",
                       {{"weight_scale", n.init.weight_scale},
                        {"bias_scale", n.init.bias_scale},
                        {"nonnegative", n.init.nonnegative}}}};
    const auto& t = cfg.train;
    doc["train"] = {{"lr", t.lr},
                    {"epochs", t.epochs},
                    {"batch_size", t.batch_size},
                    {"optimizer", t.optimizer == Optimizer::Sgd ? "sgd" : "adam"},
                    {"adam", {{"beta1", t.adam_beta1}, {"beta2", t.adam_beta2}, {"eps", t.adam_eps}}},
                    {"loss", t.loss == LossKind::MeanSquared ? "mse" : "ce"},
                    {"lambda_ortho", t.lambda_ortho},
                    {"lr_decay", t.lr_decay}};
    const auto& d = cfg.data;
    switch (d.source) {
        case DataSpec::Source::Synthetic2D:
            doc["data"] = {{"source", "synthetic2d"},
                           {"classes", d.synthetic.classes},
                           {"per_class", d.synthetic.per_class},
                           {"layout", d.synthetic.layout == Layout2D::Blobs ? "blobs" : "rings+blobs"},
                           {"seed", d.synthetic.seed}};
            break;
        case DataSpec::Source::Idx:
            doc["data"] = {{"source", "idx"}, {"images", d.images}, {"labels", d.labels}, {"limit", d.limit}};
            break;
        case DataSpec::Source::Csv: doc["data"] = {{"source", "csv"}, {"path", d.path}}; break;
    }
    const auto& a = cfg.analysis;
    doc["analysis"] = {{"level", a.level},         {"resolution", a.resolution}, {"extent", a.extent},
                       {"samples", a.samples},     {"neighbors", a.neighbors},   {"queries", a.queries},
                       {"clusters", a.clusters},   {"iterations", a.iterations}, {"bins", a.bins}};
    return doc.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    auto cfg = config_from_json(read_text_file(path));
    const auto base = path.parent_path();
    const auto resolve = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
    };
    resolve(cfg.model);
    resolve(cfg.data.images);
    resolve(cfg.data.labels);
    resolve(cfg.data.path);
    return cfg;
}

Network build_network(const NetworkSpec& spec, std::uint64_t seed) {
    return make_network(spec.input_shape, spec.layers, spec.classes, seed, spec.init);
}

Dataset load_dataset(const DataSpec& spec) {
    switch (spec.source) {
        case DataSpec::Source::Synthetic2D: return gen_synthetic_2d(spec.synthetic);
        case DataSpec::Source::Idx: return load_idx(spec.images, spec.labels, spec.limit).data;
        case DataSpec::Source::Csv: return load_csv(spec.path);
    }
    throw DomainError("unknown data source");
}

}  // namespace masolab
