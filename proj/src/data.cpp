#include "ris/data.hpp"

#include <png.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>

namespace ris::inline RIS_PRECISION {

namespace {

std::atomic<std::uint64_t> g_reads{0};
std::atomic<int> g_guards{0};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

// Shape membership in local coordinates scaled so the shape spans [-1, 1].
bool inside(int cls, double u, double v) {
    const double box = std::max(std::abs(u), std::abs(v));
    auto band = [](double t, double freq) { return static_cast<long>(std::floor((t + 2) * freq)) % 2 == 0; };
    switch (cls) {
        case 0: return u * u + v * v <= 1;
        case 1: return box <= 0.85;
        case 2: return v <= 0.7 && v >= -1 && std::abs(u) <= 0.9 * (v + 1) / 1.7;
        case 3: {
            const double r = std::sqrt(u * u + v * v);
            return r >= 0.55 && r <= 1;
        }
        case 4: return (std::abs(u) <= 0.3 && std::abs(v) <= 1) || (std::abs(v) <= 0.3 && std::abs(u) <= 1);
        case 5: {
            const double a = (u + v) / std::numbers::sqrt2, b = (u - v) / std::numbers::sqrt2;
            return (std::abs(a) <= 0.28 && std::abs(b) <= 1.1) || (std::abs(b) <= 0.28 && std::abs(a) <= 1.1);
        }
        case 6: return box <= 1 && band(v, 2);
        case 7: return box <= 1 && band(u, 2);
        case 8: return box <= 1 && band((u + v) / std::numbers::sqrt2, 2);
        case 9: return box <= 1 && band(u, 2) == band(v, 2);
        default: return false;
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void note_real_data_read(const std::string& source) {
    g_reads.fetch_add(1, std::memory_order_relaxed);
    if (g_guards.load(std::memory_order_relaxed) > 0)
        throw DataFreeViolation("real data read under the data-free guard: " + source);
}

std::uint64_t real_data_reads() { return g_reads.load(std::memory_order_relaxed); }

DataFreeGuard::DataFreeGuard() : start_(real_data_reads()) { g_guards.fetch_add(1); }
DataFreeGuard::~DataFreeGuard() { g_guards.fetch_sub(1); }
bool DataFreeGuard::active() { return g_guards.load() > 0; }
std::uint64_t DataFreeGuard::violations() const { return real_data_reads() - start_; }

Dataset::Dataset(Tensor images, std::vector<int> labels, int num_classes, std::string source)
    : images_(std::move(images)), labels_(std::move(labels)), num_classes_(num_classes), source_(std::move(source)) {
    if (images_.rank() != 4) throw std::invalid_argument("dataset images must be [N,C,H,W], got " + shape_str(images_.shape()));
    if (images_.dim(0) != static_cast<int>(labels_.size()))
        throw std::invalid_argument("dataset has " + std::to_string(images_.dim(0)) + " images but " +
                                    std::to_string(labels_.size()) + " labels");
    if (num_classes_ < 2) throw std::invalid_argument("dataset needs at least 2 classes");
    for (int l : labels_)
        if (l < 0 || l >= num_classes_) throw std::invalid_argument("label out of range: " + std::to_string(l));
}

Shape Dataset::image_shape() const { return {images_.dim(1), images_.dim(2), images_.dim(3)}; }

Batch Dataset::batch(std::span<const int> indices) const {
    note_real_data_read(source_);
    const auto s = image_shape();
    const std::size_t per = shape_size(s);
    Batch b{Tensor({static_cast<int>(indices.size()), s[0], s[1], s[2]}), {}};
    b.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int k = indices[i];
        if (k < 0 || k >= size()) throw std::out_of_range("dataset index " + std::to_string(k));
        std::copy_n(images_.data() + static_cast<std::size_t>(k) * per, per, b.images.data() + i * per);
        b.labels.push_back(labels_[static_cast<std::size_t>(k)]);
    }
    return b;
}

Batch Dataset::slice(int begin, int end) const {
    end = std::min(end, size());
    std::vector<int> idx;
    for (int i = begin; i < end; ++i) idx.push_back(i);
    return batch(idx);
}

Dataset Dataset::head(int n) const {
    Batch b = slice(0, std::min(n, size()));
    return Dataset(std::move(b.images), std::move(b.labels), num_classes_, source_);
}

const std::vector<std::string>& shapes10_class_names() {
    static const std::vector<std::string> names{"disk",         "square",          "triangle",
                                                "ring",         "plus",            "cross",
                                                "hstripes",     "vstripes",        "dstripes",
                                                "checkerboard"};
    return names;
}

Dataset make_shapes10(int n, int image_size, std::uint64_t seed, double difficulty) {
    if (n < 1) throw std::invalid_argument("shapes10 needs n >= 1");
    if (image_size < 8) throw std::invalid_argument("shapes10 needs image_size >= 8");
    if (!(difficulty >= 0 && difficulty <= 1)) throw std::invalid_argument("shapes10 difficulty must be in [0, 1]");
    const double d = difficulty;
    Rng rng(seed);
    const int s = image_size;
    Tensor images({n, 3, s, s});
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int cls = i % 10;  // balanced
        labels[static_cast<std::size_t>(i)] = cls;
        double bg[3], fg[3];
        double contrast = 0;
        while (contrast < 0.9 - 0.6 * d) {
            contrast = 0;
            for (int c = 0; c < 3; ++c) {
                bg[c] = rng.uniform();
                fg[c] = rng.uniform();
                contrast += std::abs(bg[c] - fg[c]);
            }
        }
        const double cx = rng.uniform(0.38 - 0.1 * d, 0.62 + 0.1 * d) * s;
        const double cy = rng.uniform(0.38 - 0.1 * d, 0.62 + 0.1 * d) * s;
        const double r = rng.uniform(0.26 - 0.08 * d, 0.38) * s;
        const double angle = rng.uniform(-0.15 - 0.45 * d, 0.15 + 0.45 * d);
        const double ca = std::cos(angle), sa = std::sin(angle);
        Real* px = images.data() + static_cast<std::size_t>(i) * 3 * s * s;
        for (int y = 0; y < s; ++y)
            for (int x = 0; x < s; ++x) {
                double cover = 0;
                for (int sy = 0; sy < 2; ++sy)
                    for (int sx = 0; sx < 2; ++sx) {
                        const double dx = x + 0.25 + 0.5 * sx - cx, dy = y + 0.25 + 0.5 * sy - cy;
                        cover += inside(cls, (ca * dx + sa * dy) / r, (-sa * dx + ca * dy) / r) ? 0.25 : 0.0;
                    }
                for (int c = 0; c < 3; ++c) {
                    const double v = cover * fg[c] + (1 - cover) * bg[c] + (0.03 + 0.12 * d) * rng.normal();
                    px[(static_cast<std::size_t>(c) * s + y) * s + x] = static_cast<Real>(std::clamp(v, 0.0, 1.0));
                }
            }
    }
    return Dataset(std::move(images), std::move(labels), 10, "shapes10");
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files, bool cifar100) {
    const std::size_t label_bytes = cifar100 ? 2 : 1, record = label_bytes + 3072;
    std::vector<Real> pixels;
    std::vector<int> labels;
    for (const auto& f : files) {
        note_real_data_read(f.string());
        const auto bytes = read_file(f);
        if (bytes.empty() || bytes.size() % record != 0)
            throw std::runtime_error(f.string() + ": size " + std::to_string(bytes.size()) +
                                     " is not a multiple of the record size " + std::to_string(record));
        for (std::size_t off = 0; off < bytes.size(); off += record) {
            labels.push_back(bytes[off + label_bytes - 1]);
            for (std::size_t k = 0; k < 3072; ++k) pixels.push_back(static_cast<Real>(bytes[off + label_bytes + k] / 255.0));
        }
    }
    const int n = static_cast<int>(labels.size());
    return Dataset(Tensor({n, 3, 32, 32}, std::move(pixels)), std::move(labels), cifar100 ? 100 : 10,
                   cifar100 ? "cifar100" : "cifar10");
}

Dataset load_image_folder(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw std::runtime_error("not a directory: " + root.string());
    std::vector<fs::path> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path());
    std::sort(classes.begin(), classes.end());
    if (classes.size() < 2) throw std::runtime_error(root.string() + ": need at least two class directories");
    std::vector<Real> pixels;
    std::vector<int> labels;
    Shape shape;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(classes[c]))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Tensor img = read_png(f);
            if (shape.empty()) shape = img.shape();
            if (img.shape() != shape)
                throw std::runtime_error(f.string() + ": size " + shape_str(img.shape()) + " differs from " + shape_str(shape));
            pixels.insert(pixels.end(), img.values().begin(), img.values().end());
            labels.push_back(static_cast<int>(c));
        }
    }
    if (labels.empty()) throw std::runtime_error(root.string() + ": no png images found");
    const int n = static_cast<int>(labels.size());
    return Dataset(Tensor({n, shape[0], shape[1], shape[2]}, std::move(pixels)), std::move(labels),
                   static_cast<int>(classes.size()), "folder:" + root.string());
}

Dataset load_dataset(const std::string& spec) {
    const auto parts = split(spec, ':');
    const std::string& kind = parts[0];
    auto need = [&](std::size_t n) {
        if (parts.size() != n) throw std::invalid_argument("bad dataset spec '" + spec + "'");
    };
    if (kind == "shapes10") {
        if (parts.size() != 4 && parts.size() != 5) throw std::invalid_argument("bad dataset spec '" + spec + "'");
        return make_shapes10(std::stoi(parts[1]), std::stoi(parts[2]), std::stoull(parts[3]),
                             parts.size() > 4 ? std::stod(parts[4]) : 0.0);
    }
    need(2);
    const std::filesystem::path dir = parts[1];
    if (kind == "cifar10") {
        std::vector<std::filesystem::path> f;
        for (int i = 1; i <= 5; ++i) f.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        return load_cifar_binary(f);
    }
    if (kind == "cifar10-test") return load_cifar_binary({dir / "test_batch.bin"});
    if (kind == "cifar100") return load_cifar_binary({dir / "train.bin"}, true);
    if (kind == "cifar100-test") return load_cifar_binary({dir / "test.bin"}, true);
    if (kind == "folder") return load_image_folder(dir);
    throw std::invalid_argument("unknown dataset kind '" + kind + "'");
}

Tensor read_png(const std::filesystem::path& path) {
    note_real_data_read(path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw std::runtime_error(path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        throw std::runtime_error(path.string() + ": " + image.message);
    }
    const int h = static_cast<int>(image.height), w = static_cast<int>(image.width);
    Tensor out({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                out[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    static_cast<Real>(buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0);
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& img) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw std::invalid_argument("write_png expects [1|3,H,W], got " + shape_str(img.shape()));
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    std::vector<png_byte> buf(static_cast<std::size_t>(c) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int k = 0; k < c; ++k) {
                const double v = std::clamp(static_cast<double>(img[(static_cast<std::size_t>(k) * h + y) * w + x]), 0.0, 1.0);
                buf[(static_cast<std::size_t>(y) * w + x) * c + k] = static_cast<png_byte>(std::lround(v * 255));
            }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error(path.string() + ": " + image.message);
}

Tensor image_grid(const Tensor& batch, int columns, int padding) {
    if (batch.rank() != 4) throw std::invalid_argument("image_grid expects [N,C,H,W]");
    const int n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    columns = std::max(1, std::min(columns, n));
    const int rows = (n + columns - 1) / columns;
    const int gh = rows * (h + padding) + padding, gw = columns * (w + padding) + padding;
    Tensor grid({c, gh, gw}, Real(1));
    for (int i = 0; i < n; ++i) {
        const int oy = padding + (i / columns) * (h + padding), ox = padding + (i % columns) * (w + padding);
        for (int k = 0; k < c; ++k)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    grid[(static_cast<std::size_t>(k) * gh + oy + y) * gw + ox + x] =
                        batch[((static_cast<std::size_t>(i) * c + k) * h + y) * w + x];
    }
    return grid;
}

}  // namespace ris
