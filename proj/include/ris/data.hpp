#ifndef RIS_DATA_HPP
#define RIS_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/rng.hpp"
#include "ris/tensor.hpp"

namespace ris::inline RIS_PRECISION {

class DataFreeViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every real-data access funnels through here. The counter is process-wide;
// while a DataFreeGuard is alive a read also throws DataFreeViolation.
void note_real_data_read(const std::string& source);
std::uint64_t real_data_reads();

class DataFreeGuard {
public:
    DataFreeGuard();
    ~DataFreeGuard();
    DataFreeGuard(const DataFreeGuard&) = delete;
    DataFreeGuard& operator=(const DataFreeGuard&) = delete;

    static bool active();
    // Reads attempted while this guard was alive.
    std::uint64_t violations() const;

private:
    std::uint64_t start_;
};

struct Batch {
    Tensor images;  // [B, C, H, W], pixels in [0, 1]
    std::vector<int> labels;
};

// Labeled images held in memory. Accessors count as real-data reads.
class Dataset {
public:
    Dataset() = default;
    Dataset(Tensor images, std::vector<int> labels, int num_classes, std::string source);

    int size() const { return static_cast<int>(labels_.size()); }
    int num_classes() const { return num_classes_; }
    Shape image_shape() const;
    const std::string& source() const { return source_; }

    Batch batch(std::span<const int> indices) const;
    Batch slice(int begin, int end) const;
    // First n samples (or all) as a new dataset.
    Dataset head(int n) const;

private:
    Tensor images_;
    std::vector<int> labels_;
    int num_classes_ = 0;
    std::string source_;
};

// Procedural 10-class desk dataset: filled disk, square, triangle, ring,
// plus, X, horizontal / vertical / diagonal stripes, checkerboard. Each image
// gets random colors, placement, size and pixel noise. difficulty in [0, 1]
// lowers contrast and raises noise, rotation and placement spread; the draw
// sequence does not depend on it.
Dataset make_shapes10(int n, int image_size, std::uint64_t seed, double difficulty = 0.0);
const std::vector<std::string>& shapes10_class_names();

// CIFAR binary batches: records of <label byte(s)><3072 bytes>. The CIFAR-100
// layout has two label bytes; the fine label is used.
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files, bool cifar100 = false);
// root/<class>/<image>.png, class ids in sorted directory order; all images
// must share one size.
Dataset load_image_folder(const std::filesystem::path& root);
// Dispatch on a spec string: "shapes10:<n>:<size>:<seed>[:<difficulty>]", "cifar10:<dir>",
// "cifar100:<dir>", "cifar10-test:<dir>", "cifar100-test:<dir>", "folder:<dir>".
Dataset load_dataset(const std::string& spec);

// [3, H, W] RGB in [0, 1]; grayscale and alpha are converted.
Tensor read_png(const std::filesystem::path& path);
// [C, H, W] with C in {1, 3}, clamped to [0, 1].
void write_png(const std::filesystem::path& path, const Tensor& image);
// Tiles a [N, C, H, W] batch into one [C, H', W'] image.
Tensor image_grid(const Tensor& batch, int columns, int padding = 1);

}  // namespace ris

#endif  // RIS_DATA_HPP
