#include "ris/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ris/checkpoint.hpp"
#include "ris/config.hpp"

namespace ris::inline RIS_PRECISION {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Var> param_list(const std::vector<NamedVar>& named) {
    std::vector<Var> out;
    for (const auto& [name, v] : named) out.push_back(v);
    return out;
}

double scalar(const Var& v) { return v.defined() ? static_cast<double>(v.value().item()) : 0.0; }

std::string channel_label(const TrainConfig& cfg, Channel picked) {
    switch (cfg.perturb.strategy) {
        case Strategy::random_pick: return picked == Channel::input ? "input" : "weight";
        default: return to_string(cfg.perturb.strategy);
    }
}

}  // namespace

std::string to_string(Objective o) { return o == Objective::ris ? "ris" : "gdfq"; }

Objective parse_objective(const std::string& s) {
    if (s == "ris") return Objective::ris;
    if (s == "gdfq") return Objective::gdfq;
    throw std::invalid_argument("unknown objective '" + s + "' (expected ris or gdfq)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (warmup_epochs < 0 || warmup_epochs >= epochs) throw std::invalid_argument("warmup_epochs must be in [0, epochs)");
    if (batches_per_epoch < 1) throw std::invalid_argument("batches_per_epoch must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
    if (!(gen_lr > 0)) throw std::invalid_argument("gen.lr must be > 0");
    if (!(gen_beta1 >= 0 && gen_beta1 < 1)) throw std::invalid_argument("gen.beta1 must be in [0, 1)");
    if (!(student_lr > 0)) throw std::invalid_argument("student.lr must be > 0");
    if (!(student_momentum >= 0 && student_momentum < 1)) throw std::invalid_argument("student.momentum must be in [0, 1)");
    if (!(student_weight_decay >= 0)) throw std::invalid_argument("student.weight_decay must be >= 0");
    if (!(kd_temperature > 0)) throw std::invalid_argument("kd.temperature must be > 0");
    if (latent_dim < 1) throw std::invalid_argument("gen.latent_dim must be >= 1");
    if (gen_base_channels < 4) throw std::invalid_argument("gen.base_channels must be >= 4");
    loss.validate();
    quant.validate();
    perturb.weight.validate();
    if (perturb.input.count < 1) throw std::invalid_argument("perturb.input.count must be >= 1");
    if (!(epsilon > 0 && epsilon < 1)) throw std::invalid_argument("robust.epsilon must be in (0, 1)");
    if (n_noise < 10) throw std::invalid_argument("robust.n_noise must be >= 10");
    if (labels.rows < 0) throw std::invalid_argument("labels.rows must be >= 0");
    if (labels.opt.steps < 0 || !(labels.opt.step_size > 0) || !(labels.opt.jitter > 0))
        throw std::invalid_argument("labels.steps must be >= 0, labels.step_size and labels.jitter > 0");
}

void write_log_csv(const std::vector<StepLog>& log, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "epoch,step,g_total,g_ce,g_bns,g_robust,r_f,r_p,channel,s_total,s_ce,s_kl\n";
    for (const auto& l : log)
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", l.epoch, l.step, l.g_total, l.g_ce, l.g_bns,
                           l.g_robust, l.r_f, l.r_p, l.channel, l.s_total, l.s_ce, l.s_kl);
    write_text_atomic(path, out.str());
}

std::vector<StepLog> read_log_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);  // header
    std::vector<StepLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 12) throw std::runtime_error(path.string() + ": malformed log line '" + line + "'");
        StepLog l;
        l.epoch = std::stoi(f[0]);
        l.step = std::stol(f[1]);
        double* nums[] = {&l.g_total, &l.g_ce, &l.g_bns, &l.g_robust, &l.r_f, &l.r_p};
        for (int i = 0; i < 6; ++i) *nums[i] = std::stod(f[static_cast<std::size_t>(2 + i)]);
        l.channel = f[8];
        l.s_total = std::stod(f[9]);
        l.s_ce = std::stod(f[10]);
        l.s_kl = std::stod(f[11]);
        out.push_back(l);
    }
    return out;
}

Trainer::Trainer(const ResNet& teacher, TrainConfig cfg)
    : teacher_(teacher), cfg_(std::move(cfg)), norm_(teacher.spec().normalization()),
      latent_rng_(cfg_.seeds.latent), perturb_rng_(cfg_.seeds.perturb) {
    cfg_.validate();
    cfg_.perturb.input.validate(teacher.spec().image_size);
    for (const auto& w : teacher_.weights())
        if (w.requires_grad()) throw std::invalid_argument("Trainer: the teacher must be frozen");
    GeneratorConfig g;
    g.num_classes = teacher.num_classes();
    g.latent_dim = cfg_.latent_dim;
    g.channels = teacher.spec().in_channels;
    g.image_size = teacher.spec().image_size;
    g.base_channels = cfg_.gen_base_channels;
    Rng init(cfg_.seeds.init);
    gen_ = std::make_unique<ConditionalGenerator>(g, init);
    student_ = std::make_unique<QuantizedModel>(build_quantized(teacher_, cfg_.quant));
    gen_opt_ = std::make_unique<Adam>(param_list(gen_->parameters()), cfg_.gen_lr, cfg_.gen_beta1);
    student_opt_ = std::make_unique<Sgd>(param_list(student_->parameters()), cfg_.student_lr, cfg_.student_momentum,
                                         cfg_.student_weight_decay);
}

ProbeContext Trainer::probe_context() const {
    ProbeContext ctx;
    ctx.teacher = &teacher_;
    ctx.norm = norm_;
    ctx.perturb = cfg_.perturb;
    ctx.mode = cfg_.prediction_mode;
    return ctx;
}

void Trainer::set_thresholds(const RobustnessThresholds& thr) {
    if (!(thr.theta_f >= 0) || !(thr.theta_p >= 0) || !std::isfinite(thr.theta_f) || !std::isfinite(thr.theta_p))
        throw std::invalid_argument("thresholds must be finite and >= 0");
    thresholds_ = thr;
}

void Trainer::prepare() {
    if (prepared_) return;
    const int c = teacher_.num_classes();
    if (cfg_.uses_robustness() && !thresholds_) {
        const Shape shape{teacher_.spec().in_channels, teacher_.spec().image_size, teacher_.spec().image_size};
        thresholds_ = calibrate_thresholds(probe_context(), cfg_.epsilon, cfg_.n_noise, shape, cfg_.seeds.calibration);
        spdlog::info("thresholds: theta_f {:.6f} theta_p {:.6f} (epsilon {}, {} noise images)", thresholds_->theta_f,
                     thresholds_->theta_p, cfg_.epsilon, cfg_.n_noise);
    }
    if (cfg_.objective == Objective::gdfq || !cfg_.labels.soft) {
        labels_ = SoftLabelMatrix::identity(c);
    } else {
        Rng rng(cfg_.seeds.labels);
        const int n = cfg_.labels.rows > 0 ? cfg_.labels.rows : 2 * c;
        labels_ = optimize_labels(n, c, cfg_.labels.opt, rng, &label_report_);
        spdlog::info("label matrix: {} rows, spread objective {:.6g} -> {:.6g}", n, label_report_.initial_objective,
                     label_report_.final_objective);
    }
    prepared_ = true;
}

const SoftLabelMatrix& Trainer::labels() const {
    if (!labels_) throw std::logic_error("label matrix not built yet; call prepare()");
    return *labels_;
}

Trainer::Conditioned Trainer::draw_condition(int batch, Rng& rng) const {
    const int c = teacher_.num_classes();
    if (cfg_.objective == Objective::gdfq) {
        std::vector<int> classes(static_cast<std::size_t>(batch));
        for (auto& k : classes) k = static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
        return {LabelCondition::hard(classes, c), one_hot(classes, c), classes, classes};
    }
    auto s = sample_rows(*labels_, batch, rng);
    return {LabelCondition::soft(s.rows), s.rows, {}, s.indices};
}

StepLog Trainer::step() {
    prepare();
    const long total = static_cast<long>(cfg_.epochs) * cfg_.batches_per_epoch;
    const long warm = static_cast<long>(cfg_.warmup_epochs) * cfg_.batches_per_epoch;
    StepLog log;
    log.epoch = epoch();
    log.step = step_;

    gen_opt_->set_lr(cosine_lr(cfg_.gen_lr, step_, total));
    {
        const auto z = sample_latent(cfg_.batch_size, cfg_.latent_dim, latent_rng_);
        const auto c = draw_condition(cfg_.batch_size, latent_rng_);
        gen_opt_->zero_grad();
        const Var x = gen_->synthesize(z, c.cond, true);
        const GeneratorLoss gl =
            cfg_.objective == Objective::gdfq
                ? gdfq_objective(x, c.classes, teacher_, norm_, cfg_.loss.alpha)
                : generator_objective(x, c.rows, probe_context(), thresholds_.value_or(RobustnessThresholds{}),
                                      cfg_.loss, perturb_rng_);
        log.g_total = scalar(gl.total);
        log.g_ce = scalar(gl.ce);
        log.g_bns = scalar(gl.bns);
        log.g_robust = scalar(gl.robust);
        log.r_f = gl.r_f_mean;
        log.r_p = gl.r_p_mean;
        if (gl.robust.defined()) log.channel = channel_label(cfg_, gl.channel);
        if (!std::isfinite(log.g_total))
            throw TrainingAborted(fmt::format("non-finite generator loss at step {}", step_));
        gl.total.backward();
        gen_opt_->step();
    }

    log.s_total = log.s_ce = log.s_kl = kNaN;
    if (step_ >= warm) {
        student_opt_->set_lr(cosine_lr(cfg_.student_lr, step_ - warm, total - warm));
        const auto z = sample_latent(cfg_.batch_size, cfg_.latent_dim, latent_rng_);
        const auto c = draw_condition(cfg_.batch_size, latent_rng_);
        Var input;
        Tensor teacher_logits;
        {
            NoGradGuard ng;
            input = norm_.from_generator(gen_->synthesize(z, c.cond, true)).detach();
            teacher_logits = teacher_.forward(input).logits.value();
        }
        student_opt_->zero_grad();
        const auto out = student_->forward_train(input);
        const auto d = distillation_loss(out.logits, teacher_logits, c.rows, cfg_.kd_temperature);
        log.s_total = scalar(d.total);
        log.s_ce = scalar(d.ce);
        log.s_kl = scalar(d.kl);
        if (!std::isfinite(log.s_total)) throw TrainingAborted(fmt::format("non-finite student loss at step {}", step_));
        d.total.backward();
        student_opt_->step();
    }
    ++step_;
    return log;
}

void Trainer::run(int until_epoch, const std::filesystem::path& checkpoint_dir) {
    if (until_epoch < 0) until_epoch = cfg_.epochs;
    until_epoch = std::min(until_epoch, cfg_.epochs);
    std::optional<DataFreeGuard> guard;
    if (cfg_.data_free_guard) guard.emplace();
    try {
        prepare();
        const long end = static_cast<long>(until_epoch) * cfg_.batches_per_epoch;
        while (step_ < end) {
            log_.push_back(step());
            if (step_ % cfg_.batches_per_epoch == 0) {
                const auto& l = log_.back();
                spdlog::info("epoch {}/{}: generator {:.4f} (ce {:.4f} bns {:.4f} robust {:.4f}) student {:.4f}",
                             epoch(), cfg_.epochs, l.g_total, l.g_ce, l.g_bns, l.g_robust, l.s_total);
                if (!checkpoint_dir.empty()) save_checkpoint(checkpoint_dir / fmt::format("epoch_{:04d}", epoch()));
            }
        }
    } catch (const TrainingAborted& e) {
        throw TrainingAborted(std::string(e.what()) + "; last good checkpoint: " +
                              (last_checkpoint_.empty() ? std::string("none") : last_checkpoint_.string()));
    }
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) {
    prepare();
    std::filesystem::create_directories(dir);
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (auto& e : with_prefix(gen_->state(), "gen/")) tensors.push_back(e);
    for (auto& e : with_prefix(student_->state(), "student/")) tensors.push_back(e);
    for (auto& e : with_prefix(gen_opt_->state(), "gen_opt/")) tensors.push_back(e);
    for (auto& e : with_prefix(student_opt_->state(), "student_opt/")) tensors.push_back(e);
    tensors.emplace_back("labels", &labels_->matrix());
    save_tensors(dir / "tensors.bin", tensors);
    write_log_csv(log_, dir / "log.csv");

    nlohmann::json act = nlohmann::json::array();
    for (std::size_t i = 0; i < student_->num_layers(); ++i) {
        const auto& q = student_->activation_quantizer(i);
        act.push_back({{"min", q.min_obs()}, {"max", q.max_obs()}, {"observed", q.observed()}});
    }
    nlohmann::json m = {{"kind", "trainer"},
                        {"config_hash", train_config_hash(cfg_)},
                        {"step", step_},
                        {"epoch", epoch()},
                        {"gen_opt_steps", gen_opt_->steps()},
                        {"rng", {{"latent", latent_rng_.serialize()}, {"perturb", perturb_rng_.serialize()}}},
                        {"activation_quantizers", act},
                        {"label_report",
                         {{"initial_objective", label_report_.initial_objective},
                          {"final_objective", label_report_.final_objective},
                          {"initial_min_distance", label_report_.initial_min_distance},
                          {"accepted_steps", label_report_.accepted_steps},
                          {"converged_early", label_report_.converged_early}}}};
    if (thresholds_)
        m["thresholds"] = {{"theta_f", thresholds_->theta_f}, {"theta_p", thresholds_->theta_p},
                           {"epsilon", thresholds_->epsilon}, {"n_noise", thresholds_->n_noise},
                           {"seed", thresholds_->seed}};
    write_json_atomic(dir / "manifest.json", m);
    last_checkpoint_ = dir;
}

void Trainer::load_checkpoint(const std::filesystem::path& dir) {
    const auto m = read_json(dir / "manifest.json");
    if (m.value("kind", "") != "trainer") throw std::runtime_error(dir.string() + " is not a trainer checkpoint");
    if (m.at("config_hash").get<std::string>() != train_config_hash(cfg_))
        throw std::runtime_error(dir.string() + " was written under a different training configuration");
    const auto tensors = load_tensors(dir / "tensors.bin");
    restore_tensors(tensors, gen_->state(), "gen/");
    restore_tensors(tensors, student_->state(), "student/");
    restore_tensors(tensors, gen_opt_->state(), "gen_opt/");
    restore_tensors(tensors, student_opt_->state(), "student_opt/");
    labels_ = SoftLabelMatrix(tensors.at("labels"));
    const auto& act = m.at("activation_quantizers");
    if (act.size() != student_->num_layers()) throw std::runtime_error(dir.string() + ": quantizer count mismatch");
    for (std::size_t i = 0; i < act.size(); ++i)
        student_->activation_quantizer(i).restore(act[i].at("min").get<double>(), act[i].at("max").get<double>(),
                                                  act[i].at("observed").get<bool>());
    if (m.contains("thresholds")) {
        const auto& t = m["thresholds"];
        RobustnessThresholds thr;
        thr.theta_f = t.at("theta_f").get<double>();
        thr.theta_p = t.at("theta_p").get<double>();
        thr.epsilon = t.at("epsilon").get<double>();
        thr.n_noise = t.at("n_noise").get<int>();
        thr.seed = t.at("seed").get<std::uint64_t>();
        thresholds_ = thr;
    }
    const auto& lr = m.at("label_report");
    label_report_.initial_objective = lr.at("initial_objective").get<double>();
    label_report_.final_objective = lr.at("final_objective").get<double>();
    label_report_.initial_min_distance = lr.at("initial_min_distance").get<double>();
    label_report_.accepted_steps = lr.at("accepted_steps").get<int>();
    label_report_.converged_early = lr.at("converged_early").get<bool>();
    step_ = m.at("step").get<long>();
    gen_opt_->set_steps(m.at("gen_opt_steps").get<long>());
    latent_rng_ = Rng::deserialize(m.at("rng").at("latent").get<std::string>());
    perturb_rng_ = Rng::deserialize(m.at("rng").at("perturb").get<std::string>());
    log_ = read_log_csv(dir / "log.csv");
    prepared_ = true;
    last_checkpoint_ = dir;
}

Trainer::Synthesized Trainer::synthesize(int n, Rng& rng, int batch) {
    prepare();
    if (n < 1) throw std::invalid_argument("synthesize: n must be >= 1");
    NoGradGuard ng;
    const int c = teacher_.num_classes();
    const auto& g = gen_->config();
    Synthesized out{Tensor({n, g.channels, g.image_size, g.image_size}), Tensor({n, c})};
    const std::size_t per = static_cast<std::size_t>(g.channels) * g.image_size * g.image_size;
    for (int b = 0; b < n; b += batch) {
        const int m = std::min(batch, n - b);
        const auto z = sample_latent(m, cfg_.latent_dim, rng);
        const auto cond = draw_condition(m, rng);
        const Tensor x = gen_->synthesize(z, cond.cond, false).value();
        std::copy(x.values().begin(), x.values().end(), out.images.data() + static_cast<std::size_t>(b) * per);
        out.row_index.insert(out.row_index.end(), cond.indices.begin(), cond.indices.end());
        std::copy(cond.rows.values().begin(), cond.rows.values().end(),
                  out.rows.data() + static_cast<std::size_t>(b) * c);
    }
    return out;
}

}  // namespace ris
