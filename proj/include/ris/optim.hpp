#ifndef RIS_OPTIM_HPP
#define RIS_OPTIM_HPP

#include <vector>

#include "ris/nn.hpp"

namespace ris::inline RIS_PRECISION {

// Parameters without a gradient this step are left untouched (their moment
// buffers too).
class Adam {
public:
    Adam(std::vector<Var> params, double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    long steps() const { return t_; }
    void set_steps(long t) { t_ = t; }
    // m/<i> and v/<i> buffers for checkpoints.
    std::vector<NamedTensorRef> state();

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

class Sgd {
public:
    Sgd(std::vector<Var> params, double lr, double momentum = 0.9, double weight_decay = 0);

    void step();
    void zero_grad();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    std::vector<NamedTensorRef> state();

private:
    std::vector<Var> params_;
    std::vector<Tensor> buf_;
    double lr_, momentum_, weight_decay_;
};

// Half-cosine from base at step 0 down to floor at step total.
double cosine_lr(double base, long step, long total, double floor = 0);

}  // namespace ris

#endif  // RIS_OPTIM_HPP
