#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "coordgan/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coordgan::train {

namespace {

constexpr int kCheckpointVersion = 1;

void write_blob(const std::string& path, const std::vector<const Tensor*>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    for (const Tensor* t : tensors) {
        // little-endian f32, row-major; this build targets LE hosts
        out.write(reinterpret_cast<const char*>(t->data()), std::streamsize(t->numel() * 4));
    }
    if (!out) throw std::runtime_error("checkpoint: short write to " + path);
}

void read_into(std::ifstream& in, Tensor& t, int64_t offset) {
    in.seekg(offset);
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
    if (!in) throw std::runtime_error("checkpoint: short read");
}

json shape_json(const Shape& s) {
    json a = json::array();
    for (int64_t d : s) a.push_back(d);
    return a;
}

}  // namespace

Adam::Adam(std::vector<std::pair<std::string, ad::Var>> params_, const TrainConfig& cfg)
    : lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.adam_eps), params(std::move(params_)) {
    for (const auto& [name, p] : params) {
        m.push_back(Tensor::zeros(p.shape()));
        v.push_back(Tensor::zeros(p.shape()));
    }
}

void Adam::step(const ad::Gradients<real>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor g = grads.tensor_or_zero(params[i].second);
        real* pm = m[i].data();
        real* pv = v[i].data();
        real* pp = params[i].second.mutable_value().data();
        const real* pg = g.data();
        const int64_t n = g.numel();
        for (int64_t j = 0; j < n; ++j) {
            pm[j] = real(beta1) * pm[j] + real(1.0 - beta1) * pg[j];
            pv[j] = real(beta2) * pv[j] + real(1.0 - beta2) * pg[j] * pg[j];
            const double mhat = double(pm[j]) / c1;
            const double vhat = double(pv[j]) / c2;
            pp[j] -= real(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

uint64_t param_hash(const nets::ParamStoreT<real>& store, const std::string& prefix) {
    uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](const void* data, size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [name, param] : store.items) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        feed(name.data(), name.size());
        feed(param.value().data(), size_t(param.value().numel()) * 4);
    }
    return h;
}

void save_checkpoint(const std::string& dir, const nets::ParamStoreT<real>& params,
                     const TrainConfig& cfg, const CheckpointState& state,
                     const std::vector<const Adam*>& optims) {
    fs::create_directories(dir);
    json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["config"] = cfg.as_map();
    manifest["iteration"] = state.iteration;
    json rng = json::object();
    for (const auto& [name, st] : state.rng) rng[name] = {st[0], st[1], st[2], st[3]};
    manifest["rng"] = rng;
    manifest["counters"] = state.counters;

    json pidx = json::array();
    std::vector<const Tensor*> blobs;
    int64_t offset = 0;
    for (const auto& [name, p] : params.items) {
        pidx.push_back({{"name", name},
                        {"shape", shape_json(p.shape())},
                        {"dtype", "f32"},
                        {"file", "params.bin"},
                        {"byte_offset", offset}});
        blobs.push_back(&p.value());
        offset += p.numel() * 4;
    }
    manifest["params"] = pidx;
    write_blob((fs::path(dir) / "params.bin").string(), blobs);

    if (!optims.empty()) {
        json oidx = json::array();
        std::vector<const Tensor*> oblobs;
        int64_t ooff = 0;
        for (size_t k = 0; k < optims.size(); ++k) {
            const Adam* a = optims[k];
            json entry;
            entry["index"] = k;
            entry["t"] = a->t;
            json slots = json::array();
            for (size_t i = 0; i < a->params.size(); ++i) {
                slots.push_back({{"name", a->params[i].first},
                                 {"file", "optim.bin"},
                                 {"m_offset", ooff},
                                 {"v_offset", ooff + a->m[i].numel() * 4}});
                oblobs.push_back(&a->m[i]);
                oblobs.push_back(&a->v[i]);
                ooff += a->m[i].numel() * 8;
            }
            entry["slots"] = slots;
            oidx.push_back(entry);
        }
        manifest["optimizers"] = oidx;
        write_blob((fs::path(dir) / "optim.bin").string(), oblobs);
    }

    std::ofstream mf((fs::path(dir) / "manifest.json").string());
    if (!mf) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";
    // Human-readable config echo next to the binary state.
    std::ofstream echo((fs::path(dir) / "config_echo.cfg").string());
    echo << cfg.echo();
}

namespace {
json load_manifest(const std::string& dir) {
    std::ifstream in((fs::path(dir) / "manifest.json").string());
    if (!in) throw std::runtime_error("checkpoint: cannot open manifest in " + dir);
    json manifest;
    in >> manifest;
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format_version " + std::to_string(version));
    return manifest;
}
}  // namespace

void load_checkpoint_params(const std::string& dir, nets::ParamStoreT<real>& params) {
    json manifest = load_manifest(dir);
    std::ifstream blob((fs::path(dir) / "params.bin").string(), std::ios::binary);
    if (!blob) throw std::runtime_error("checkpoint: cannot open params.bin in " + dir);
    std::map<std::string, std::pair<int64_t, Shape>> index;
    for (const auto& e : manifest.at("params")) {
        Shape s;
        for (const auto& d : e.at("shape")) s.push_back(d.get<int64_t>());
        index[e.at("name").get<std::string>()] = {e.at("byte_offset").get<int64_t>(), s};
    }
    for (auto& [name, p] : params.items) {
        auto it = index.find(name);
        if (it == index.end()) throw std::runtime_error("checkpoint: missing parameter " + name);
        if (it->second.second != p.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        read_into(blob, p.mutable_value(), it->second.first);
    }
}

void load_checkpoint_optims(const std::string& dir, std::vector<Adam*> optims) {
    json manifest = load_manifest(dir);
    if (!manifest.contains("optimizers"))
        throw std::runtime_error("checkpoint: no optimizer state in " + dir);
    std::ifstream blob((fs::path(dir) / "optim.bin").string(), std::ios::binary);
    if (!blob) throw std::runtime_error("checkpoint: cannot open optim.bin in " + dir);
    const json& oidx = manifest.at("optimizers");
    if (oidx.size() != optims.size())
        throw std::runtime_error("checkpoint: optimizer count mismatch");
    for (size_t k = 0; k < optims.size(); ++k) {
        Adam* a = optims[k];
        const json& entry = oidx[k];
        a->t = entry.at("t").get<int64_t>();
        const json& slots = entry.at("slots");
        if (slots.size() != a->params.size())
            throw std::runtime_error("checkpoint: optimizer slot count mismatch");
        for (size_t i = 0; i < a->params.size(); ++i) {
            if (slots[i].at("name").get<std::string>() != a->params[i].first)
                throw std::runtime_error("checkpoint: optimizer slot name mismatch");
            read_into(blob, a->m[i], slots[i].at("m_offset").get<int64_t>());
            read_into(blob, a->v[i], slots[i].at("v_offset").get<int64_t>());
        }
    }
}

CheckpointState load_checkpoint_state(const std::string& dir) {
    json manifest = load_manifest(dir);
    CheckpointState st;
    st.iteration = manifest.at("iteration").get<int64_t>();
    for (const auto& [name, arr] : manifest.at("rng").items()) {
        std::array<uint64_t, 4> s{};
        for (int i = 0; i < 4; ++i) s[size_t(i)] = arr[size_t(i)].get<uint64_t>();
        st.rng[name] = s;
    }
    if (manifest.contains("counters"))
        for (const auto& [name, v] : manifest.at("counters").items())
            st.counters[name] = v.get<int64_t>();
    return st;
}

TrainConfig load_checkpoint_config(const std::string& dir) {
    json manifest = load_manifest(dir);
    TrainConfig cfg;
    for (const auto& [key, val] : manifest.at("config").items())
        cfg.apply_override(key + "=" + val.get<std::string>());
    cfg.validate();
    return cfg;
}

}  // namespace coordgan::train
