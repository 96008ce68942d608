#ifndef RIS_GENERATOR_HPP
#define RIS_GENERATOR_HPP

#include <vector>

#include "ris/nn.hpp"

namespace ris::inline RIS_PRECISION {

struct GeneratorConfig {
    int num_classes = 10;
    int latent_dim = 100;
    int channels = 3;
    int image_size = 32;
    // Feature maps of the first block; each upsampling block halves it.
    int base_channels = 64;
    // Number of 2x upsampling blocks; the seed map is image_size >> upsample_blocks.
    int upsample_blocks = 2;

    void validate() const;
};

struct LatentBatch {
    Tensor z;  // [B, latent_dim]
    int batch() const { return z.dim(0); }
    int dim() const { return z.dim(1); }
};

LatentBatch sample_latent(int batch, int dim, Rng& rng);

// Either hard class indices or soft rows on the probability simplex.
class LabelCondition {
public:
    static LabelCondition hard(std::vector<int> classes, int num_classes);
    static LabelCondition soft(Tensor rows);  // [B, C]

    bool is_hard() const noexcept { return !classes_.empty(); }
    int batch() const;
    int num_classes() const noexcept { return num_classes_; }
    const std::vector<int>& classes() const noexcept { return classes_; }
    // Soft rows; one-hot rows for hard labels.
    Tensor rows() const;

private:
    std::vector<int> classes_;
    Tensor rows_;
    int num_classes_ = 0;
};

// Class-conditional decoder G(z | y). The condition enters additively:
// h = z + t E, where E is a learned [C, latent_dim] embedding and t is the
// soft row (a hard label selects the row of E directly).
class ConditionalGenerator {
public:
    ConditionalGenerator(const GeneratorConfig& cfg, Rng& rng);

    // Images in [-1, 1], shape [B, channels, image_size, image_size]. Training
    // mode normalizes with batch statistics and updates running statistics.
    Var synthesize(const Var& z, const LabelCondition& cond, bool training);
    Var synthesize(const LatentBatch& z, const LabelCondition& cond, bool training);

    const GeneratorConfig& config() const { return cfg_; }
    std::vector<NamedVar> parameters() const;
    std::vector<NamedTensorRef> state();

private:
    Var condition(const Var& z, const LabelCondition& cond) const;

    GeneratorConfig cfg_;
    Var embedding_;  // [C, latent_dim]
    Linear project_;
    BatchNorm2d bn0_;
    std::vector<Conv2d> convs_;
    std::vector<BatchNorm2d> bns_;
    Conv2d out_conv_;
    BatchNorm2d out_bn_;  // no affine update: gamma/beta frozen at 1/0
    int seed_size_ = 0;
};

}  // namespace ris

#endif  // RIS_GENERATOR_HPP
