#include "coordgan/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace coordgan::train {

namespace {

bool finite(double v) { return std::isfinite(v); }

void dump_abort(const std::string& out_dir, int64_t iter, const losses::Breakdown& terms,
                const std::string& where) {
    json j;
    j["iteration"] = iter;
    j["phase"] = where;
    j["breakdown"] = terms;
    std::ofstream out((fs::path(out_dir) / "abort_dump.json").string());
    out << j.dump(2) << "\n";
}

void check_finite(const losses::Breakdown& terms, const std::string& out_dir, int64_t iter,
                  const std::string& where) {
    for (const auto& [k, v] : terms)
        if (!finite(v)) {
            dump_abort(out_dir, iter, terms, where);
            throw TrainAbort("non-finite loss '" + k + "' at iteration " + std::to_string(iter) +
                             " (" + where + "); breakdown dumped to abort_dump.json");
        }
}

std::vector<Tensor> load_training_images(const TrainConfig& cfg) {
    std::vector<Tensor> out;
    if (cfg.data_kind == "synthetic") {
        auto ds = data::synth_dataset(cfg.train_size, cfg.resolution, cfg.seed + 1000003);
        for (auto& s : ds) out.push_back(hwc_to_nchw1(s.image));
    } else {
        auto imgs = data::load_folder(cfg.data_path, cfg.resolution);
        for (auto& im : imgs) out.push_back(hwc_to_nchw1(im));
    }
    return out;
}

Tensor gather_batch(const std::vector<Tensor>& images, int64_t& epoch, int64_t& cursor,
                    uint64_t seed, std::vector<int64_t>& ord_state, int64_t batch) {
    std::vector<Tensor> picks;
    for (int64_t i = 0; i < batch; ++i) {
        if (cursor >= int64_t(images.size())) {
            cursor = 0;
            ++epoch;
            ord_state = data::epoch_order(seed, epoch, int64_t(images.size()));
        }
        picks.push_back(images[size_t(ord_state[size_t(cursor)])]);
        ++cursor;
    }
    return kern::concat_axis(picks, 0);
}

}  // namespace

Tensor hwc_to_nchw1(const TensorT<real>& hwc) {
    const int64_t H = hwc.dim(0), W = hwc.dim(1), C = hwc.dim(2);
    return kern::permute(hwc, {2, 0, 1}).reshaped({1, C, H, W});
}

TensorT<real> nchw1_to_hwc(const Tensor& nchw) {
    const int64_t C = nchw.dim(1), H = nchw.dim(2), W = nchw.dim(3);
    return kern::permute(nchw.reshaped({C, H, W}), {1, 2, 0});
}

NdjsonLogger::NdjsonLogger(const std::string& path) {
    out_ = std::fopen(path.c_str(), "a");
    if (!out_) throw std::runtime_error("log: cannot open " + path);
}

NdjsonLogger::~NdjsonLogger() {
    if (out_) std::fclose(static_cast<FILE*>(out_));
}

void NdjsonLogger::log(int64_t step, const losses::Breakdown& terms, const std::string& prefix) {
    FILE* f = static_cast<FILE*>(out_);
    for (const auto& [name, value] : terms)
        std::fprintf(f, "{\"step\":%lld,\"term\":\"%s%s\",\"value\":%.9g}\n",
                     static_cast<long long>(step), prefix.c_str(), name.c_str(), value);
    std::fflush(f);
}

std::pair<Tensor, Tensor> make_paired_latents(int64_t batch, int64_t dim, Rng& rng) {
    const int64_t half = batch / 2;
    Tensor s_base = Tensor::randn({half, dim}, rng);
    Tensor t_base = Tensor::randn({half, dim}, rng);
    Tensor z_s({batch, dim}), z_t({batch, dim});
    for (int64_t i = 0; i < batch; ++i) {
        const int64_t si = i / 2;
        const int64_t ti = ((i + 1) / 2) % half;
        std::copy(s_base.data() + si * dim, s_base.data() + (si + 1) * dim, z_s.data() + i * dim);
        std::copy(t_base.data() + ti * dim, t_base.data() + (ti + 1) * dim, z_t.data() + i * dim);
    }
    return {z_s, z_t};
}

// ------------------------------------------------------------- GAN --------

GanTrainer::GanTrainer(const TrainConfig& cfg_, std::string out_dir_)
    : cfg(cfg_),
      model(nets::CoordGanModel::create(cfg_, cfg_.seed)),
      perc(losses::Perceptual::create(cfg_.perceptual_seed, cfg_.perceptual_channels)),
      latent_rng(Rng(cfg_.seed).fork(1)),
      crop_rng(Rng(cfg_.seed).fork(2)),
      out_dir(std::move(out_dir_)) {
    cfg.validate();
    fs::create_directories(out_dir);
    std::vector<std::pair<std::string, ad::Var>> gparams, dparams;
    for (const auto& kv : model.params.items) {
        if (kv.first.rfind("image-discriminator/", 0) == 0 ||
            kv.first.rfind("patch-discriminator/", 0) == 0)
            dparams.push_back(kv);
        else if (kv.first.rfind("encoder/", 0) != 0)
            gparams.push_back(kv);
    }
    opt_g = Adam(std::move(gparams), cfg);
    opt_d = Adam(std::move(dparams), cfg);
    dataset_nchw = load_training_images(cfg);
    order = data::epoch_order(cfg.seed, 0, int64_t(dataset_nchw.size()));
}

Tensor GanTrainer::next_real_batch() {
    return gather_batch(dataset_nchw, data_epoch, data_cursor, cfg.seed, order, cfg.batch);
}

losses::Breakdown GanTrainer::step() {
    losses::Breakdown merged;
    const bool apply_r1 = (iter % cfg.r1_interval) == 0;

    // Discriminator update.
    {
        Tensor reals = next_real_batch();
        auto [z_s, z_t] = make_paired_latents(cfg.batch, cfg.latent_dim, latent_rng);
        auto fake_out = nets::synthesize(model, ad::Var::constant(z_s), ad::Var::constant(z_t));
        auto dobj =
            losses::discriminator_objective(model, fake_out.image.value(), reals, apply_r1, cfg, crop_rng);
        check_finite(dobj.breakdown, out_dir, iter, "discriminator");
        auto grads = ad::backward(dobj.total);
        opt_d.step(grads);
        for (const auto& [k, v] : dobj.breakdown) merged["d/" + k] = v;
    }

    // Generator update.
    {
        Tensor reals = next_real_batch();
        auto [z_s, z_t] = make_paired_latents(cfg.batch, cfg.latent_dim, latent_rng);
        auto out = nets::synthesize(model, ad::Var::constant(z_s), ad::Var::constant(z_t));
        losses::LossWeights w = losses::warmup_weights(iter, cfg);
        auto gobj = losses::generator_objective(model, out, reals, w, real(cfg.tau), perc, crop_rng, cfg);
        check_finite(gobj.breakdown, out_dir, iter, "generator");
        auto grads = ad::backward(gobj.total);
        opt_g.step(grads);
        for (const auto& [k, v] : gobj.breakdown) merged["g/" + k] = v;
    }

    ++iter;
    return merged;
}

void GanTrainer::save(const std::string& dir) const {
    CheckpointState st;
    st.iteration = iter;
    st.rng["latent"] = latent_rng.state();
    st.rng["crop"] = crop_rng.state();
    st.counters["data_epoch"] = data_epoch;
    st.counters["data_cursor"] = data_cursor;
    save_checkpoint(dir, model.params, cfg, st, {&opt_g, &opt_d});
}

void GanTrainer::restore(const std::string& dir) {
    load_checkpoint_params(dir, model.params);
    load_checkpoint_optims(dir, {&opt_g, &opt_d});
    CheckpointState st = load_checkpoint_state(dir);
    iter = st.iteration;
    latent_rng.set_state(st.rng.at("latent"));
    crop_rng.set_state(st.rng.at("crop"));
    data_epoch = st.counters.at("data_epoch");
    data_cursor = st.counters.at("data_cursor");
    order = data::epoch_order(cfg.seed, data_epoch, int64_t(dataset_nchw.size()));
}

std::string GanTrainer::run() {
    {
        std::ofstream echo((fs::path(out_dir) / "config_echo.cfg").string());
        echo << cfg.echo();
    }
    NdjsonLogger logger((fs::path(out_dir) / "train_log.ndjson").string());
    while (iter < cfg.iters) {
        losses::Breakdown terms = step();
        if (iter % cfg.log_interval == 0 || iter == cfg.iters) logger.log(iter, terms, "");
        if (cfg.ckpt_interval > 0 && iter % cfg.ckpt_interval == 0 && iter < cfg.iters)
            save((fs::path(out_dir) / ("ckpt-" + std::to_string(iter))).string());
    }
    const std::string final_dir = (fs::path(out_dir) / "ckpt-final").string();
    save(final_dir);
    return final_dir;
}

// ---------------------------------------------------------- encoder -------

EncoderTrainer::EncoderTrainer(const TrainConfig& cfg_, const std::string& generator_ckpt,
                               std::string out_dir_)
    : cfg(cfg_),
      model(nets::CoordGanModel::create(cfg_, cfg_.seed)),
      perc(losses::Perceptual::create(cfg_.perceptual_seed, cfg_.perceptual_channels)),
      latent_rng(Rng(cfg_.seed).fork(11)),
      aux_rng(Rng(cfg_.seed).fork(12)),
      out_dir(std::move(out_dir_)) {
    fs::create_directories(out_dir);
    load_checkpoint_params(generator_ckpt, model.params);
    std::vector<std::pair<std::string, ad::Var>> eparams;
    for (const auto& kv : model.params.items)
        if (kv.first.rfind("encoder/", 0) == 0) eparams.push_back(kv);
    opt_e = Adam(std::move(eparams), cfg);
    dataset_nchw = load_training_images(cfg);
    order = data::epoch_order(cfg.seed, 0, int64_t(dataset_nchw.size()));
    Rng probe_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    probe_z_s = Tensor::randn({16, cfg.latent_dim}, probe_rng);
    probe_z_t = Tensor::randn({16, cfg.latent_dim}, probe_rng);
}

Tensor EncoderTrainer::next_real_batch() {
    return gather_batch(dataset_nchw, data_epoch, data_cursor, cfg.seed, order, cfg.batch);
}

losses::Breakdown EncoderTrainer::step() {
    Tensor reals = next_real_batch();
    Tensor z_s = Tensor::randn({cfg.batch, cfg.latent_dim}, latent_rng);
    Tensor z_t = Tensor::randn({cfg.batch, cfg.latent_dim}, latent_rng);
    losses::LossWeights w = losses::LossWeights::from_config(cfg);
    auto eobj = losses::encoder_objective(model, reals, ad::Var::constant(z_s),
                                          ad::Var::constant(z_t), w, perc, aux_rng);
    check_finite(eobj.breakdown, out_dir, iter, "encoder");
    auto grads = ad::backward(eobj.total);
    opt_e.step(grads);
    ++iter;
    return eobj.breakdown;
}

double EncoderTrainer::probe_consistency() const {
    auto synth = nets::synthesize(model, ad::Var::constant(probe_z_s), ad::Var::constant(probe_z_t));
    auto enc = model.encoder.forward(ad::Var::constant(synth.image.value()));
    auto enc_rows = model.warp_mlp.forward(model.canonical_const(), enc.w_s);
    auto l = ad::add(ad::mse(enc.w_s, ad::Var::constant(synth.w_s.value())),
                     ad::mse(enc_rows, ad::Var::constant(synth.corr_rows.value())));
    return double(l.item());
}

std::string EncoderTrainer::run() {
    {
        std::ofstream echo((fs::path(out_dir) / "config_echo.cfg").string());
        echo << cfg.echo();
    }
    NdjsonLogger logger((fs::path(out_dir) / "encoder_log.ndjson").string());
    {
        losses::Breakdown probe{{"probe_consistency", probe_consistency()}};
        logger.log(0, probe, "e/");
    }
    while (iter < cfg.encoder_iters) {
        losses::Breakdown terms = step();
        if (iter % cfg.log_interval == 0 || iter == cfg.encoder_iters) {
            terms["probe_consistency"] = probe_consistency();
            logger.log(iter, terms, "e/");
        }
    }
    const std::string final_dir = (fs::path(out_dir) / "ckpt-final").string();
    CheckpointState st;
    st.iteration = iter;
    st.rng["latent"] = latent_rng.state();
    st.rng["aux"] = aux_rng.state();
    st.counters["data_epoch"] = data_epoch;
    st.counters["data_cursor"] = data_cursor;
    save_checkpoint(final_dir, model.params, cfg, st, {&opt_e});
    return final_dir;
}

}  // namespace coordgan::train
