#ifndef RIS_LOSSES_HPP
#define RIS_LOSSES_HPP

#include <vector>

#include "ris/robustness.hpp"

namespace ris::inline RIS_PRECISION {

// Mean over rows of -sum_c t_c log pred_c; pred rows must sum to 1 +- 1e-4.
// Zero probabilities are clamped to 1e-12 inside the log.
Var cross_entropy(const Var& pred, const Tensor& target);
Var cross_entropy(const Var& pred, const std::vector<int>& classes);

Tensor one_hot(const std::vector<int>& classes, int num_classes);

// Per BN layer: batch statistics of the synthesized batch against the
// teacher's stored statistics (sigma = sqrt(running_var)).
struct BNStatPair {
    Var batch_mean;  // [C]
    Var batch_std;   // [C]
    Tensor stored_mean;
    Tensor stored_std;
};

// Forward hooks recording each BN layer's input and turning it into a pair.
class BNCapture final : public ForwardHooks {
public:
    explicit BNCapture(const Classifier& teacher, ForwardHooks* inner = nullptr);
    Var weight(std::size_t index, const Var& w) override;
    Var activation(std::size_t site, const Var& a) override;
    void bn_input(std::size_t index, const Var& x) override;
    std::vector<BNStatPair> take();

private:
    std::vector<const BatchNorm2d*> layers_;
    std::vector<BNStatPair> pairs_;
    ForwardHooks* inner_;
};

// x is already in the teacher's input space.
std::vector<BNStatPair> capture_bn_inputs(const Classifier& teacher, const Var& x);

// sum_l ||mu_batch - mu_stored||^2 + ||sigma_batch - sigma_stored||^2
Var bns_loss(const std::vector<BNStatPair>& pairs);

struct LossWeights {
    double alpha = 0.1;     // BNS
    double lambda_r = 1.0;  // robustness term
    double beta = 1.0;      // prediction hinge inside the robustness term

    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct GeneratorLoss {
    Var total;
    Var ce;
    Var bns;
    Var robust;  // undefined when lambda_r == 0
    double r_f_mean = 0;
    double r_p_mean = 0;
    Channel channel = Channel::input;  // meaningful only when robust is defined
};

// CE + alpha BNS + lambda_r L_robust on a generator batch x (generator
// domain). targets are the condition rows. The robustness term is skipped
// entirely, consuming no randomness, when lambda_r == 0. Under the parallel
// strategy r_f_mean / r_p_mean average the two parts.
GeneratorLoss generator_objective(const Var& x, const Tensor& targets, const ProbeContext& ctx,
                                  const RobustnessThresholds& thr, const LossWeights& w, Rng& rng);

// CE on hard labels + alpha BNS, with no robustness machinery.
GeneratorLoss gdfq_objective(const Var& x, const std::vector<int>& classes, const Classifier& teacher,
                             const InputNormalization& norm, double alpha);

struct DistillationLoss {
    Var total;
    Var ce;
    Var kl;  // already multiplied by T^2
};

// CE(softmax(student), labels) + T^2 KL(softmax(teacher / T) || softmax(student / T)).
DistillationLoss distillation_loss(const Var& student_logits, const Tensor& teacher_logits, const Tensor& labels,
                                   double temperature);

}  // namespace ris

#endif  // RIS_LOSSES_HPP
