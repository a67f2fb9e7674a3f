#include "coordgan/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace coordgan {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

// One row per config key: binds parsing, overriding and echoing.
struct Field {
    std::string key;  // section.name
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

#define F_INT(SECTION, NAME, MEMBER)                                                      \
    Field{#SECTION "." #NAME,                                                             \
          [](TrainConfig& c, const std::string& v) { c.MEMBER = std::stoll(v); },         \
          [](const TrainConfig& c) { return std::to_string(c.MEMBER); }}
#define F_U64(SECTION, NAME, MEMBER)                                                      \
    Field{#SECTION "." #NAME,                                                             \
          [](TrainConfig& c, const std::string& v) { c.MEMBER = std::stoull(v); },        \
          [](const TrainConfig& c) { return std::to_string(c.MEMBER); }}
#define F_REAL(SECTION, NAME, MEMBER)                                                     \
    Field{#SECTION "." #NAME,                                                             \
          [](TrainConfig& c, const std::string& v) { c.MEMBER = std::stod(v); },          \
          [](const TrainConfig& c) {                                                      \
              std::ostringstream os;                                                      \
              os << c.MEMBER;                                                             \
              return os.str();                                                            \
          }}
#define F_BOOL(SECTION, NAME, MEMBER)                                                     \
    Field{#SECTION "." #NAME,                                                             \
          [](TrainConfig& c, const std::string& v) { c.MEMBER = parse_bool(v, #NAME); },  \
          [](const TrainConfig& c) { return c.MEMBER ? "true" : "false"; }}
#define F_STR(SECTION, NAME, MEMBER)                                                      \
    Field{#SECTION "." #NAME, [](TrainConfig& c, const std::string& v) { c.MEMBER = v; }, \
          [](const TrainConfig& c) { return c.MEMBER; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        F_INT(model, resolution, resolution),
        F_INT(model, latent_dim, latent_dim),
        F_INT(model, map_depth, map_depth),
        F_INT(model, map_hidden, map_hidden),
        F_INT(model, warp_hidden, warp_hidden),
        F_INT(model, posenc_channels, posenc_channels),
        F_INT(model, gen_channels, gen_channels),
        F_INT(model, gen_layers, gen_layers),
        F_INT(model, rgb_every, rgb_every),
        F_INT(model, disc_channels, disc_channels),
        F_INT(model, patch_channels, patch_channels),
        F_INT(model, patch_feat, patch_feat),
        F_INT(model, enc_channels, enc_channels),
        F_INT(model, upsample_blocks, upsample_blocks),
        F_BOOL(model, struc_mod, struc_mod),
        F_STR(model, struc_mod_mask, struc_mod_mask),
        F_BOOL(model, backward_mlp, backward_mlp),
        F_REAL(loss, lambda_t, lambda_t),
        F_REAL(loss, lambda_s, lambda_s),
        F_REAL(loss, lambda_warp, lambda_warp),
        F_REAL(loss, lambda_cham, lambda_cham),
        F_REAL(loss, lambda_gan, lambda_gan),
        F_REAL(loss, lambda_con, lambda_con),
        F_REAL(loss, lambda_rec, lambda_rec),
        F_REAL(loss, lambda_bmlp, lambda_bmlp),
        F_REAL(loss, tau, tau),
        F_REAL(loss, r1_gamma_img, r1_gamma_img),
        F_REAL(loss, r1_gamma_patch, r1_gamma_patch),
        F_INT(loss, r1_interval, r1_interval),
        F_U64(loss, perceptual_seed, perceptual_seed),
        F_INT(loss, perceptual_channels, perceptual_channels),
        F_INT(train, batch, batch),
        F_INT(train, iters, iters),
        F_INT(train, warmup, warmup),
        F_REAL(train, lr, lr),
        F_REAL(train, beta1, beta1),
        F_REAL(train, beta2, beta2),
        F_REAL(train, adam_eps, adam_eps),
        F_U64(train, seed, seed),
        F_INT(train, ckpt_interval, ckpt_interval),
        F_INT(train, log_interval, log_interval),
        F_INT(train, encoder_iters, encoder_iters),
        F_BOOL(train, use_warp_loss, use_warp_loss),
        F_BOOL(train, use_structure_swap, use_structure_swap),
        F_BOOL(train, use_texture_swap, use_texture_swap),
        F_STR(data, kind, data_kind),
        F_STR(data, path, data_path),
        F_INT(data, train_size, train_size),
        F_INT(data, val_size, val_size),
        F_BOOL(data, augment_flip, augment_flip),
        F_INT(eval, prop_runs, prop_runs),
        F_INT(eval, prop_queries, prop_queries),
        F_INT(eval, swap_pairs, swap_pairs),
    };
    return f;
}

#undef F_INT
#undef F_U64
#undef F_REAL
#undef F_BOOL
#undef F_STR

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

}  // namespace

std::map<std::string, std::string> parse_ini(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: bad section at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        out[key] = val;
    }
    return out;
}

std::vector<bool> TrainConfig::struc_mod_layers() const {
    std::vector<bool> mask(size_t(gen_layers), struc_mod);
    if (!struc_mod_mask.empty()) {
        std::istringstream is(struc_mod_mask);
        std::string tok;
        size_t i = 0;
        while (std::getline(is, tok, ',') && i < mask.size()) mask[i++] = (trim(tok) == "1");
        if (i != mask.size())
            throw std::invalid_argument("config: struc_mod_mask must list one 0/1 per generator layer");
    }
    return mask;
}

void TrainConfig::validate() const {
    if (resolution < 16) throw std::invalid_argument("config: resolution must be >= 16");
    if (warmup > iters) throw std::invalid_argument("config: warmup must be <= iters");
    if (lr <= 0 || beta2 <= 0) throw std::invalid_argument("config: rates must be > 0");
    if (tau <= 0) throw std::invalid_argument("config: tau must be > 0");
    if (batch < 2 || batch % 2 != 0) throw std::invalid_argument("config: batch must be even and >= 2");
    if (gen_layers < 1) throw std::invalid_argument("config: gen_layers must be >= 1");
    if (r1_interval < 1) throw std::invalid_argument("config: r1_interval must be >= 1");
    if (data_kind != "synthetic" && data_kind != "folder")
        throw std::invalid_argument("config: data.kind must be synthetic or folder");
    struc_mod_layers();  // throws on malformed mask
    for (double l : {lambda_t, lambda_s, lambda_warp, lambda_cham, lambda_gan, lambda_con, lambda_rec})
        if (l < 0) throw std::invalid_argument("config: loss weights must be >= 0");
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    TrainConfig cfg;
    for (const auto& [key, val] : parse_ini(ss.str())) {
        const Field* f = find_field(key);
        if (!f) throw std::invalid_argument("config: unknown key '" + key + "' (see docs/config.md)");
        f->set(cfg, val);
    }
    cfg.validate();
    return cfg;
}

void TrainConfig::apply_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must be section.key=value: " + assignment);
    const std::string key = trim(assignment.substr(0, eq));
    const std::string val = trim(assignment.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw std::invalid_argument("override: unknown key '" + key + "' (see docs/config.md)");
    f->set(*this, val);
}

std::string TrainConfig::echo() const {
    std::ostringstream os;
    std::string section;
    for (const auto& f : fields()) {
        const std::string sec = f.key.substr(0, f.key.find('.'));
        if (sec != section) {
            os << "[" << sec << "]\n";
            section = sec;
        }
        os << f.key.substr(f.key.find('.') + 1) << " = " << f.get(*this) << "\n";
    }
    return os.str();
}

std::map<std::string, std::string> TrainConfig::as_map() const {
    std::map<std::string, std::string> m;
    for (const auto& f : fields()) m[f.key] = f.get(*this);
    return m;
}

}  // namespace coordgan
