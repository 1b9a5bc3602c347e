#include <cstdio>

#include "json.hpp"
#include "internal.hpp"
#include "masolab/errors.hpp"
#include "masolab/io.hpp"

namespace masolab {

using nlohmann::json;
using detail::overloaded;

namespace {

json shape_json(const Shape3& s) { return json::array({s.channels, s.height, s.width}); }
json stride_json(const Stride& s) { return json::array({s.vertical, s.horizontal}); }

json matrix_json(const DenseMatrix& m) {
    auto d = m.data();
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(d.begin(), d.end())}};
}

const char* activation_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::ReLU: return "relu";
        case ActivationKind::LeakyReLU: return "leaky_relu";
        case ActivationKind::Abs: return "abs";
    }
    return "relu";
}

void require_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) throw FormatError(std::string("cannot serialize non-finite ") + what);
}

json layer_json(const Layer& layer) {
    return std::visit(
        overloaded{
            [](const DenseLayer& l) -> json {
                require_finite(l.W.data(), "dense weights");
                return {{"kind", "dense"}, {"W", matrix_json(l.W)}, {"b", l.b}};
            },
            [](const ConvLayer& l) -> json {
                require_finite(l.filters.values, "conv filters");
                return {{"kind", "conv"},
                        {"filters",
                         {{"shape", json::array({l.filters.out_channels, l.filters.in_channels,
                                                 l.filters.height, l.filters.width})},
                          {"data", l.filters.values}}},
                        {"channel_bias", l.channel_bias},
                        {"in_shape", shape_json(l.in_shape)},
                        {"padding", l.padding == Padding::Same ? "same" : "valid"},
                        {"stride", stride_json(l.stride)}};
            },
            [](const ActivationLayer& l) -> json {
                return {{"kind", "activation"},
                        {"activation", activation_name(l.kind)},
                        {"leak", l.leak},
                        {"dim", l.dim}};
            },
            [](const PoolLayer& l) -> json {
                return {{"kind", "pool"},
                        {"pool", l.kind == PoolKind::Max ? "max" : "average"},
                        {"axis", l.axis == PoolAxis::Spatial ? "spatial" : "channel"},
                        {"in_shape", shape_json(l.in_shape)},
                        {"window", stride_json(l.window)},
                        {"stride", stride_json(l.stride)}};
            },
            [](const BatchNormLayer& l) -> json {
                const auto& s = l.state;
                return {{"kind", "batchnorm"},       {"gamma", s.gamma},
                        {"zeta", s.zeta},            {"running_mean", s.running_mean},
                        {"running_var", s.running_var}, {"eps", s.eps},
                        {"momentum", s.momentum},
                        {"mode", s.mode == BatchNormMode::Train ? "train" : "infer"}};
            },
            [](const ResidualLayer& l) -> json {
                return {{"kind", "residual"},       {"activation", activation_name(l.kind)},
                        {"leak", l.leak},           {"C", matrix_json(l.C)},
                        {"b_C", l.b_C},             {"C_skip", matrix_json(l.C_skip)},
                        {"b_skip", l.b_skip}};
            },
        },
        layer);
}

// Field access with located diagnostics.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail("expected an object");
    }

    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(where_ + ": " + msg); }

    const json& at(const char* key) const {
        const auto it = j_.find(key);
        if (it == j_.end()) fail(std::string("missing field '") + key + "'");
        return *it;
    }
    std::string sub(const char* key) const { return where_ + "/" + key; }

    std::string str(const char* key) const {
        const auto& v = at(key);
        if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
        return v.get<std::string>();
    }
    double num(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
        return v.get<double>();
    }
    std::size_t count(const char* key) const {
        const auto& v = at(key);
        if (!v.is_number_unsigned()) fail(std::string("field '") + key + "' must be a nonnegative integer");
        return v.get<std::size_t>();
    }
    DenseVector vec(const char* key) const {
        const auto& v = at(key);
        if (!v.is_array()) fail(std::string("field '") + key + "' must be an array");
        DenseVector out;
        out.reserve(v.size());
        for (const auto& e : v) {
            if (!e.is_number()) fail(std::string("field '") + key + "' must hold numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }
    std::vector<std::size_t> counts(const char* key, std::size_t n) const {
        const auto& v = at(key);
        if (!v.is_array() || v.size() != n)
            fail(std::string("field '") + key + "' must be an array of " + std::to_string(n) + " integers");
        std::vector<std::size_t> out;
        for (const auto& e : v) {
            if (!e.is_number_unsigned()) fail(std::string("field '") + key + "' must hold nonnegative integers");
            out.push_back(e.get<std::size_t>());
        }
        return out;
    }
    Shape3 shape(const char* key) const {
        const auto c = counts(key, 3);
        if (c[0] == 0 || c[1] == 0 || c[2] == 0) fail(std::string("field '") + key + "' has a zero extent");
        return {c[0], c[1], c[2]};
    }
    Stride stride(const char* key) const {
        const auto c = counts(key, 2);
        if (c[0] == 0 || c[1] == 0) fail(std::string("field '") + key + "' has a zero entry");
        return {c[0], c[1]};
    }
    DenseMatrix matrix(const char* key) const {
        Reader m(at(key), sub(key));
        const auto rows = m.count("rows");
        const auto cols = m.count("cols");
        auto data = m.vec("data");
        if (data.size() != rows * cols) m.fail("data length does not equal rows*cols");
        return DenseMatrix(rows, cols, std::move(data));
    }
    ActivationKind activation(const char* key) const {
        const auto s = str(key);
        if (s == "relu") return ActivationKind::ReLU;
        if (s == "leaky_relu") return ActivationKind::LeakyReLU;
        if (s == "abs") return ActivationKind::Abs;
        fail("unknown activation '" + s + "'");
    }

private:
    const json& j_;
    std::string where_;
};

Layer layer_from_json(const json& j, const std::string& where) {
    Reader r(j, where);
    const auto kind = r.str("kind");
    if (kind == "dense") return DenseLayer{r.matrix("W"), r.vec("b")};
    if (kind == "conv") {
        Reader f(r.at("filters"), r.sub("filters"));
        const auto s = f.counts("shape", 4);
        FilterBank bank(s[0], s[1], s[2], s[3]);
        bank.values = f.vec("data");
        if (bank.values.size() != s[0] * s[1] * s[2] * s[3]) f.fail("data length does not match shape");
        const auto pad = r.str("padding");
        if (pad != "same" && pad != "valid") r.fail("unknown padding '" + pad + "'");
        return make_conv_layer(std::move(bank), r.vec("channel_bias"), r.shape("in_shape"),
                               pad == "same" ? Padding::Same : Padding::Valid, r.stride("stride"));
    }
    if (kind == "activation") return ActivationLayer{r.activation("activation"), r.num("leak"), r.count("dim")};
    if (kind == "pool") {
        const auto p = r.str("pool");
        const auto a = r.str("axis");
        if (p != "max" && p != "average") r.fail("unknown pool kind '" + p + "'");
        if (a != "spatial" && a != "channel") r.fail("unknown pool axis '" + a + "'");
        return make_pool_layer(p == "max" ? PoolKind::Max : PoolKind::Average,
                               a == "spatial" ? PoolAxis::Spatial : PoolAxis::Channel,
                               r.shape("in_shape"), r.stride("window"), r.stride("stride"));
    }
    if (kind == "batchnorm") {
        BatchNormState s;
        s.gamma = r.vec("gamma");
        s.zeta = r.vec("zeta");
        s.running_mean = r.vec("running_mean");
        s.running_var = r.vec("running_var");
        s.eps = r.num("eps");
        s.momentum = r.num("momentum");
        const auto mode = r.str("mode");
        if (mode != "train" && mode != "infer") r.fail("unknown batch norm mode '" + mode + "'");
        s.mode = mode == "train" ? BatchNormMode::Train : BatchNormMode::Infer;
        const auto n = s.gamma.size();
        if (s.zeta.size() != n || s.running_mean.size() != n || s.running_var.size() != n)
            r.fail("batch norm vectors differ in length");
        if (!(s.eps > 0.0)) r.fail("eps must be > 0");
        for (double v : s.running_var) {
            if (v < 0.0) r.fail("running_var must be >= 0");
        }
        return BatchNormLayer{std::move(s)};
    }
    if (kind == "residual") {
        ResidualLayer l;
        l.kind = r.activation("activation");
        l.leak = r.num("leak");
        l.C = r.matrix("C");
        l.b_C = r.vec("b_C");
        l.C_skip = r.matrix("C_skip");
        l.b_skip = r.vec("b_skip");
        return l;
    }
    r.fail("unknown layer kind '" + kind + "'");
}

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

std::string model_to_json(const Network& net, std::optional<std::uint64_t> seed) {
    validate(net);
    require_finite(net.W_final.data(), "classifier weights");
    json doc;
    doc["format"] = "masolab-model";
    doc["version"] = kModelFormatVersion;
    doc["input_shape"] = shape_json(net.input_shape);
    doc["layers"] = json::array();
    for (const auto& layer : net.layers) doc["layers"].push_back(layer_json(layer));
    doc["W_final"] = matrix_json(net.W_final);
    doc["b_final"] = net.b_final;
    if (seed) doc["seed"] = *seed;
    doc["fingerprint"] = fingerprint_hex(fingerprint(net));
    return doc.dump(1) + "\n";
}

Network model_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("malformed model JSON: ") + e.what());
    }
    Reader r(doc, "model");
    if (r.str("format") != "masolab-model") r.fail("not a masolab model document");
    const auto& version = r.at("version");
    if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion)
        r.fail("unsupported model version " + version.dump() + " (expected " +
               std::to_string(kModelFormatVersion) + ")");
    Network net;
    net.input_shape = r.shape("input_shape");
    const auto& layers = r.at("layers");
    if (!layers.is_array()) r.fail("field 'layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i)
        net.layers.push_back(layer_from_json(layers[i], "model/layers/" + std::to_string(i)));
    net.W_final = r.matrix("W_final");
    net.b_final = r.vec("b_final");
    try {
        validate(net);
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
    const auto stored = r.str("fingerprint");
    const auto actual = fingerprint_hex(fingerprint(net));
    if (stored != actual) r.fail("fingerprint mismatch: stored " + stored + ", computed " + actual);
    return net;
}

void save_model(const Network& net, const std::filesystem::path& path,
                std::optional<std::uint64_t> seed) {
    write_text_file(path, model_to_json(net, seed));
}

Network load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

}  // namespace masolab
