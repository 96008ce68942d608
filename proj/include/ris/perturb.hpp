#ifndef RIS_PERTURB_HPP
#define RIS_PERTURB_HPP

#include <string>
#include <vector>

#include "ris/nn.hpp"
#include "ris/rng.hpp"

namespace ris::inline RIS_PRECISION {

enum class InputKind { gaussian_noise, translation, resize, random_select };
enum class WeightKind { gaussian, adversarial, dropout };
// input/weight use one channel only (component ablations); the other three
// combine both channels.
enum class Strategy { serial, parallel, random_pick, input, weight };
enum class Channel { input, weight };

std::string to_string(InputKind k);
std::string to_string(WeightKind k);
std::string to_string(Strategy s);
InputKind parse_input_kind(const std::string& s);
WeightKind parse_weight_kind(const std::string& s);
Strategy parse_strategy(const std::string& s);

struct InputPerturbation {
    InputKind kind = InputKind::random_select;
    double noise_sigma = 0.05;
    double max_shift = 2.0;  // pixels
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    // Perturbed copies per batch (the n of the max over perturbations).
    int count = 3;

    void validate(int image_size) const;
    friend bool operator==(const InputPerturbation&, const InputPerturbation&) = default;
};

struct WeightPerturbation {
    WeightKind kind = WeightKind::gaussian;
    double sigma_rel = 0.01;
    double gamma = 0.01;
    double dropout_p = 0.1;

    void validate() const;
    friend bool operator==(const WeightPerturbation&, const WeightPerturbation&) = default;
};

struct PerturbationConfig {
    InputPerturbation input;
    WeightPerturbation weight;
    Strategy strategy = Strategy::random_pick;

    friend bool operator==(const PerturbationConfig&, const PerturbationConfig&) = default;
};

// Concrete kind for one batch: random_select draws uniformly among the three.
InputKind resolve_kind(InputKind kind, Rng& rng);

// One perturbed copy of x (generator domain, [N,C,H,W]); per-image
// parameters are drawn independently.
Var apply_input(const Var& x, const InputPerturbation& spec, Rng& rng);
// spec.count copies sharing one resolved kind.
std::vector<Var> apply_inputs(const Var& x, const InputPerturbation& spec, Rng& rng);

// A teacher whose conv/linear weights are replaced by w + v during forward.
// The stored weights are never touched.
class PerturbedView final : public ForwardHooks {
public:
    PerturbedView(std::vector<Var> weights, ForwardHooks* inner = nullptr)
        : weights_(std::move(weights)), inner_(inner) {}

    Var weight(std::size_t index, const Var& w) override;
    Var activation(std::size_t site, const Var& a) override;
    void bn_input(std::size_t index, const Var& x) override;

    const std::vector<Var>& weights() const { return weights_; }
    void set_inner(ForwardHooks* inner) { inner_ = inner; }

private:
    std::vector<Var> weights_;
    ForwardHooks* inner_;
};

// The adversarial kind needs the batch (already in the teacher's input space)
// and its target rows; the others ignore them.
PerturbedView perturb_weights(const Classifier& teacher, const WeightPerturbation& spec, Rng& rng,
                              const Tensor* inputs = nullptr, const Tensor* targets = nullptr);

Channel pick_channel(Rng& rng);

}  // namespace ris

#endif  // RIS_PERTURB_HPP
