#include "petnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "petnet/rng.hpp"

namespace petnet::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Separable 5-tap Gaussian, sigma = 1 px, zero padding at the borders.
void gaussian_blur(const std::vector<double>& src, std::vector<double>& dst, int64_t h,
                   int64_t w) {
    static const double raw[5] = {std::exp(-2.0), std::exp(-0.5), 1.0, std::exp(-0.5),
                                  std::exp(-2.0)};
    double norm = raw[0] + raw[1] + raw[2] + raw[3] + raw[4];
    double k[5];
    for (int i = 0; i < 5; ++i) k[i] = raw[i] / norm;

    std::vector<double> tmp(static_cast<size_t>(h * w), 0.0);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t d = -2; d <= 2; ++d) {
                int64_t xx = x + d;
                if (xx >= 0 && xx < w) s += k[d + 2] * src[static_cast<size_t>(y * w + xx)];
            }
            tmp[static_cast<size_t>(y * w + x)] = s;
        }
    }
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t d = -2; d <= 2; ++d) {
                int64_t yy = y + d;
                if (yy >= 0 && yy < h) s += k[d + 2] * tmp[static_cast<size_t>(yy * w + x)];
            }
            dst[static_cast<size_t>(y * w + x)] = s;
        }
    }
}

}  // namespace

std::vector<PhantomSample> generate_phantoms(int64_t count, int64_t height, int64_t width,
                                             uint64_t seed, double lesion_probability,
                                             double noise_level) {
    if (height < 16 || width < 16) {
        throw ConfigError("phantom dims must be at least 16x16, got " + std::to_string(height) +
                          "x" + std::to_string(width));
    }
    if (count < 0) throw ConfigError("phantom count must be >= 0");
    if (lesion_probability < 0.0 || lesion_probability > 1.0) {
        throw ConfigError("lesion_probability must lie in [0, 1], got " +
                          std::to_string(lesion_probability));
    }
    if (noise_level < 0.0) {
        throw ConfigError("noise_level must be >= 0, got " + std::to_string(noise_level));
    }

    Rng rng(seed);
    std::vector<PhantomSample> out;
    out.reserve(static_cast<size_t>(count));
    int64_t hw = height * width;

    for (int64_t s = 0; s < count; ++s) {
        double cx = static_cast<double>(width) * (0.5 + 0.125 * (rng.uniform() - 0.5));
        double cy = static_cast<double>(height) * (0.5 + 0.125 * (rng.uniform() - 0.5));
        double a = static_cast<double>(width) * (0.30 + 0.08 * rng.uniform());
        double b = static_cast<double>(height) * (0.30 + 0.08 * rng.uniform());

        bool has_lesion = rng.uniform() < lesion_probability;
        struct Lesion {
            double x, y, r, value;
        };
        std::vector<Lesion> lesions;
        if (has_lesion) {
            int64_t n_lesions = 1 + std::min<int64_t>(2, static_cast<int64_t>(rng.uniform() * 3.0));
            double r_max = std::max(3.5, static_cast<double>(std::min(height, width)) / 12.0);
            for (int64_t l = 0; l < n_lesions; ++l) {
                double r = 2.5 + (r_max - 2.5) * rng.uniform();
                double value = 3.0 + rng.uniform();
                double theta = 2.0 * kPi * rng.uniform();
                double rho = rng.uniform();
                // placing the lesion center on the shrunken ellipse keeps the
                // whole lesion disc strictly inside the body
                double lx = cx + rho * (a - r - 1.0) * std::cos(theta);
                double ly = cy + rho * (b - r - 1.0) * std::sin(theta);
                lesions.push_back({lx, ly, r, value});
            }
        }

        std::vector<double> piecewise(static_cast<size_t>(hw), 0.0);
        std::vector<double> mask(static_cast<size_t>(hw), 0.0);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
                double ex = (px - cx) / a, ey = (py - cy) / b;
                double v = 0.0;
                if (ex * ex + ey * ey <= 1.0) v = kBodyUptake;
                for (const Lesion& l : lesions) {
                    double dx = px - l.x, dy = py - l.y;
                    if (dx * dx + dy * dy <= l.r * l.r) {
                        v = std::max(v, l.value);
                        mask[static_cast<size_t>(y * width + x)] = 1.0;
                    }
                }
                piecewise[static_cast<size_t>(y * width + x)] = v;
            }
        }

        std::vector<double> clean(static_cast<size_t>(hw), 0.0);
        gaussian_blur(piecewise, clean, height, width);

        std::vector<double> image(static_cast<size_t>(hw), 0.0);
        for (int64_t i = 0; i < hw; ++i) {
            double noise = noise_level * std::sqrt(clean[static_cast<size_t>(i)] + 1e-3) *
                           rng.normal();
            image[static_cast<size_t>(i)] = std::max(0.0, clean[static_cast<size_t>(i)] + noise);
        }

        PhantomSample sample;
        sample.image = Tensor(Shape{1, height, width}, std::move(image));
        sample.mask = Tensor(Shape{1, height, width}, std::move(mask));
        sample.clean = Tensor(Shape{1, height, width}, std::move(clean));
        sample.class_label = has_lesion ? 1 : 0;

        double mask_count = 0.0, lesion_sum = 0.0;
        for (int64_t i = 0; i < hw; ++i) {
            if (sample.mask[i] > 0.5) {
                mask_count += 1.0;
                lesion_sum += sample.clean[i];
            }
        }
        if ((mask_count > 0.0) != has_lesion) {
            throw NumericError("phantom " + std::to_string(s) +
                               ": mask occupancy disagrees with class label");
        }
        if (has_lesion && lesion_sum / mask_count < kMinLesionContrast * kBodyUptake) {
            throw NumericError("phantom " + std::to_string(s) + ": lesion contrast " +
                               std::to_string(lesion_sum / mask_count) + " below floor");
        }
        out.push_back(std::move(sample));
    }
    return out;
}

SplitResult split(const std::vector<PhantomSample>& dataset, const SplitSpec& spec) {
    if (dataset.empty()) throw ConfigError("split: dataset is empty");
    if (spec.train < 0.0 || spec.validation < 0.0 || spec.test < 0.0) {
        throw ConfigError("split fractions must be >= 0");
    }
    double sum = spec.train + spec.validation + spec.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
    }
    int64_t n = static_cast<int64_t>(dataset.size());
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(order);

    int64_t n_val = std::llround(spec.validation * static_cast<double>(n));
    int64_t n_test = std::llround(spec.test * static_cast<double>(n));
    if (n_val + n_test > n) {  // rounding overshoot on tiny sets
        n_test = std::max<int64_t>(0, n - n_val);
    }
    int64_t n_train = n - n_val - n_test;

    SplitResult result;
    for (int64_t i = 0; i < n; ++i) {
        const PhantomSample& sample = dataset[static_cast<size_t>(order[static_cast<size_t>(i)])];
        if (i < n_train) {
            result.train.push_back(sample);
        } else if (i < n_train + n_val) {
            result.validation.push_back(sample);
        } else {
            result.test.push_back(sample);
        }
    }
    return result;
}

FoldPlan kfold(int64_t dataset_size, int64_t k, uint64_t seed) {
    if (k < 2 || k > dataset_size) {
        throw ConfigError("kfold needs 2 <= k <= dataset size, got k=" + std::to_string(k) +
                          ", n=" + std::to_string(dataset_size));
    }
    std::vector<int64_t> order(static_cast<size_t>(dataset_size));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.assign(static_cast<size_t>(k), {});
    for (int64_t i = 0; i < dataset_size; ++i) {
        plan.folds[static_cast<size_t>(i % k)].push_back(order[static_cast<size_t>(i)]);
    }
    return plan;
}

std::vector<std::vector<int64_t>> batches(int64_t dataset_size, int64_t batch_size, uint64_t seed,
                                          int64_t epoch_index) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<int64_t> order(static_cast<size_t>(dataset_size));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<uint64_t>(epoch_index)));
    rng.shuffle(order);

    std::vector<std::vector<int64_t>> result;
    for (int64_t start = 0; start < dataset_size; start += batch_size) {
        int64_t end = std::min(dataset_size, start + batch_size);
        result.emplace_back(order.begin() + start, order.begin() + end);
    }
    return result;
}

void write_pgm(const Tensor& image, const std::filesystem::path& path, double max_value_scale) {
    if (image.shape().rank() != 3 || image.shape()[0] != 1) {
        throw ShapeError("write_pgm expects a 1 x H x W tensor, got " + image.shape().str());
    }
    if (max_value_scale <= 0.0) throw ConfigError("write_pgm scale must be positive");
    int64_t h = image.shape()[1], w = image.shape()[2];
    for (int64_t i = 0; i < image.size(); ++i) {
        if (image[i] < 0.0) {
            throw NumericError("write_pgm: negative value at index " + std::to_string(i));
        }
    }
    std::ostringstream out;
    out << "P5\n" << w << " " << h << "\n65535\n";
    for (int64_t i = 0; i < image.size(); ++i) {
        double v = std::clamp(image[i] / max_value_scale, 0.0, 1.0);
        auto pix = static_cast<uint16_t>(std::lround(v * 65535.0));
        out.put(static_cast<char>(pix >> 8));  // big-endian per the PGM standard
        out.put(static_cast<char>(pix & 0xFF));
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw FormatError("cannot write " + path.string());
        const std::string& s = out.str();
        f.write(s.data(), static_cast<std::streamsize>(s.size()));
        if (!f) throw FormatError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments. The
// terminating byte is left in the stream so the single header/payload
// separator stays readable.
std::string pgm_token(std::istream& in) {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            if (!token.empty()) {
                in.unget();
                return token;
            }
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!token.empty()) {
                in.unget();
                return token;
            }
            continue;
        }
        token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw FormatError("truncated PGM header");
    return token;
}

int64_t pgm_int(std::istream& in, const char* what) {
    std::string token = pgm_token(in);
    try {
        size_t used = 0;
        int64_t v = std::stoll(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return v;
    } catch (const std::exception&) {
        throw FormatError(std::string("bad PGM ") + what + ": '" + token + "'");
    }
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::string magic = pgm_token(f);
    if (magic != "P5") throw FormatError("not a binary PGM (P5) file: " + path.string());
    int64_t w = pgm_int(f, "width");
    int64_t h = pgm_int(f, "height");
    int64_t maxval = pgm_int(f, "maxval");
    if (w < 1 || h < 1) throw FormatError("bad PGM dimensions in " + path.string());
    if (maxval < 1 || maxval > 65535) {
        throw FormatError("PGM maxval " + std::to_string(maxval) + " out of range in " +
                          path.string());
    }
    // exactly one whitespace byte separates the header from the payload
    int sep = f.get();
    if (sep == EOF || !std::isspace(sep)) throw FormatError("bad PGM header separator");

    int bytes = maxval > 255 ? 2 : 1;
    std::vector<char> raw(static_cast<size_t>(h * w * bytes));
    f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw FormatError("truncated PGM payload in " + path.string());
    }
    Tensor out = Tensor::zeros(Shape{1, h, w});
    for (int64_t i = 0; i < h * w; ++i) {
        uint32_t v;
        if (bytes == 2) {
            v = static_cast<uint32_t>(static_cast<uint8_t>(raw[static_cast<size_t>(2 * i)])) << 8 |
                static_cast<uint8_t>(raw[static_cast<size_t>(2 * i + 1)]);
        } else {
            v = static_cast<uint8_t>(raw[static_cast<size_t>(i)]);
        }
        out[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return out;
}

void write_dataset(const std::vector<PhantomSample>& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "index,image_path,mask_path,class_label,clean_path\n";
    char name[64];
    for (size_t i = 0; i < dataset.size(); ++i) {
        const PhantomSample& s = dataset[i];
        std::snprintf(name, sizeof(name), "sample_%04zu", i);
        std::string image_name = std::string(name) + "_image.pgm";
        std::string mask_name = std::string(name) + "_mask.pgm";
        std::string clean_name = std::string(name) + "_clean.pgm";
        write_pgm(s.image, dir / image_name, kPhantomPgmScale);
        write_pgm(s.mask, dir / mask_name, 1.0);
        write_pgm(s.clean, dir / clean_name, kPhantomPgmScale);
        manifest << i << ',' << image_name << ',' << mask_name << ',' << s.class_label << ','
                 << clean_name << '\n';
    }
    std::filesystem::path tmp = dir / "manifest.csv.tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw FormatError("cannot write manifest in " + dir.string());
        f << manifest.str();
    }
    std::filesystem::rename(tmp, dir / "manifest.csv");
}

std::vector<PhantomSample> read_dataset(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.csv");
    if (!f) throw FormatError("cannot open manifest in " + dir.string());
    std::string line;
    if (!std::getline(f, line) || line != "index,image_path,mask_path,class_label,clean_path") {
        throw FormatError("bad manifest header in " + dir.string());
    }
    std::vector<PhantomSample> out;
    size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 5) {
            throw FormatError("manifest line " + std::to_string(line_no) + ": expected 5 fields");
        }
        PhantomSample s;
        Tensor image = read_pgm(dir / fields[1]);
        Tensor mask = read_pgm(dir / fields[2]);
        Tensor clean = read_pgm(dir / fields[4]);
        s.image = map_elementwise(image, [](double v) { return v * kPhantomPgmScale; });
        s.mask = map_elementwise(mask, [](double v) { return v > 0.5 ? 1.0 : 0.0; });
        s.clean = map_elementwise(clean, [](double v) { return v * kPhantomPgmScale; });
        try {
            s.class_label = std::stoll(fields[3]);
        } catch (const std::exception&) {
            throw FormatError("manifest line " + std::to_string(line_no) + ": bad class label '" +
                              fields[3] + "'");
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace petnet::data
