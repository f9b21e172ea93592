#include "specpoint/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "specpoint/errors.hpp"
#include "specpoint/rng.hpp"

namespace specpoint::data {

namespace {

// ---------------------------------------------------------------------------
// Line-oriented text reading
// ---------------------------------------------------------------------------

struct TextReader {
    std::ifstream in;
    std::string path;
    std::size_t line_no = 0;

    explicit TextReader(const std::string& p) : in(p), path(p) {
        if (!in) throw DataError("cannot open file: " + p);
    }

    /// Next line with comments stripped and CR removed; false at EOF.
    bool next(std::string& line) {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            bool blank = true;
            for (char c : line) {
                if (!std::isspace(static_cast<unsigned char>(c))) {
                    blank = false;
                    break;
                }
            }
            if (!blank) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError(path + ":" + std::to_string(line_no) + ": " + what);
    }
};

double parse_double(const std::string& token, const TextReader& reader) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') reader.fail("expected a number, got '" + token + "'");
    return v;
}

std::size_t parse_index(const std::string& token, const TextReader& reader) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const unsigned long long v = std::strtoull(begin, &end, 10);
    if (end == begin || *end != '\0' || token[0] == '-') {
        reader.fail("expected a non-negative integer, got '" + token + "'");
    }
    return static_cast<std::size_t>(v);
}

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> tokens;
    std::istringstream ss(line);
    std::string t;
    while (ss >> t) tokens.push_back(std::move(t));
    return tokens;
}

} // namespace

// ---------------------------------------------------------------------------
// OFF meshes
// ---------------------------------------------------------------------------

Mesh load_off(const std::string& path) {
    TextReader reader(path);
    std::string line;
    if (!reader.next(line)) reader.fail("empty OFF file");

    std::vector<std::string> tokens = split_tokens(line);
    if (tokens.empty() || tokens[0] != "OFF") reader.fail("missing OFF header");
    tokens.erase(tokens.begin());
    if (tokens.empty()) {
        // Counts on their own line (the common layout).
        if (!reader.next(line)) reader.fail("missing vertex/face counts");
        tokens = split_tokens(line);
    }
    if (tokens.size() < 2) reader.fail("expected vertex and face counts");
    const std::size_t n_vertices = parse_index(tokens[0], reader);
    const std::size_t n_faces = parse_index(tokens[1], reader);
    if (n_vertices < 1) reader.fail("OFF file declares no vertices");

    Mesh mesh;
    mesh.vertices = Matrix(n_vertices, 3);
    for (std::size_t v = 0; v < n_vertices; ++v) {
        if (!reader.next(line)) reader.fail("vertex list truncated");
        tokens = split_tokens(line);
        if (tokens.size() < 3) reader.fail("vertex needs 3 coordinates");
        for (std::size_t d = 0; d < 3; ++d) {
            mesh.vertices(v, d) = parse_double(tokens[d], reader);
        }
    }
    for (std::size_t f = 0; f < n_faces; ++f) {
        if (!reader.next(line)) reader.fail("face list truncated");
        tokens = split_tokens(line);
        if (tokens.empty()) reader.fail("empty face record");
        const std::size_t arity = parse_index(tokens[0], reader);
        if (arity < 3) reader.fail("face needs at least 3 vertices");
        if (tokens.size() < 1 + arity) reader.fail("face record truncated");
        std::vector<std::size_t> poly(arity);
        for (std::size_t i = 0; i < arity; ++i) {
            poly[i] = parse_index(tokens[1 + i], reader);
            if (poly[i] >= n_vertices) reader.fail("vertex index out of range");
        }
        for (std::size_t i = 1; i + 1 < arity; ++i) {
            mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
        }
    }
    return mesh;
}

// ---------------------------------------------------------------------------
// Surface sampling
// ---------------------------------------------------------------------------

std::pair<std::array<double, 3>, double> normalize_points(Matrix& coords) {
    std::array<double, 3> center{};
    if (coords.rows == 0) return {center, 1.0};
    const std::size_t d = coords.cols;
    for (std::size_t j = 0; j < d && j < 3; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < coords.rows; ++i) sum += coords(i, j);
        center[j] = sum / static_cast<double>(coords.rows);
        for (std::size_t i = 0; i < coords.rows; ++i) coords(i, j) -= center[j];
    }
    double max_r2 = 0.0;
    for (std::size_t i = 0; i < coords.rows; ++i) {
        double r2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) r2 += coords(i, j) * coords(i, j);
        max_r2 = std::max(max_r2, r2);
    }
    double scale = std::sqrt(max_r2);
    if (scale <= 0.0) scale = 1.0;
    for (double& v : coords.data) v /= scale;
    return {center, scale};
}

MeshSample sample_mesh(const Mesh& mesh, std::size_t n, std::uint64_t seed,
                       bool with_normals) {
    if (n == 0) throw ConfigError("sample count must be positive");
    if (mesh.triangles.empty()) throw DataError("mesh has no triangles to sample");

    const auto vertex = [&mesh](std::size_t idx, double* out) {
        const double* row = mesh.vertices.row_ptr(idx);
        out[0] = row[0];
        out[1] = row[1];
        out[2] = row[2];
    };

    // Cumulative areas for inverse-CDF triangle selection.
    std::vector<double> cumulative(mesh.triangles.size());
    std::vector<std::array<double, 3>> face_normals(mesh.triangles.size());
    double total = 0.0;
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
        double a[3], b[3], c[3];
        vertex(mesh.triangles[t][0], a);
        vertex(mesh.triangles[t][1], b);
        vertex(mesh.triangles[t][2], c);
        const double u[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
        const double v[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
        double cross[3] = {u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2],
                           u[0] * v[1] - u[1] * v[0]};
        const double norm =
            std::sqrt(cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]);
        total += 0.5 * norm;
        cumulative[t] = total;
        if (norm > 0.0) {
            face_normals[t] = {cross[0] / norm, cross[1] / norm, cross[2] / norm};
        } else {
            face_normals[t] = {0.0, 0.0, 1.0};
        }
    }
    if (total <= 0.0) throw DataError("mesh surface area is zero");

    Rng rng(seed);
    MeshSample sample;
    sample.coords = Matrix(n, 3);
    if (with_normals) sample.normals = Matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const double target = rng.uniform01() * total;
        const std::size_t t = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), target) -
            cumulative.begin());
        const std::size_t tri = std::min(t, mesh.triangles.size() - 1);

        double a[3], b[3], c[3];
        vertex(mesh.triangles[tri][0], a);
        vertex(mesh.triangles[tri][1], b);
        vertex(mesh.triangles[tri][2], c);
        double u = rng.uniform01();
        double v = rng.uniform01();
        if (u + v > 1.0) { // reflect into the triangle
            u = 1.0 - u;
            v = 1.0 - v;
        }
        for (std::size_t d = 0; d < 3; ++d) {
            sample.coords(i, d) = a[d] + u * (b[d] - a[d]) + v * (c[d] - a[d]);
        }
        if (with_normals) {
            for (std::size_t d = 0; d < 3; ++d) sample.normals(i, d) = face_normals[tri][d];
        }
    }
    const auto [center, scale] = normalize_points(sample.coords);
    sample.center = center;
    sample.scale = scale;
    return sample;
}

// ---------------------------------------------------------------------------
// xyz text clouds
// ---------------------------------------------------------------------------

XyzCloud load_xyz(const std::string& path) {
    TextReader reader(path);
    std::string line;
    std::vector<double> coords, normals;
    std::vector<std::size_t> labels;
    std::size_t width = 0;

    while (reader.next(line)) {
        const std::vector<std::string> tokens = split_tokens(line);
        if (width == 0) {
            width = tokens.size();
            if (width != 3 && width != 4 && width != 6 && width != 7) {
                reader.fail("expected 3, 4, 6, or 7 columns, got " +
                            std::to_string(tokens.size()));
            }
        } else if (tokens.size() != width) {
            reader.fail("expected " + std::to_string(width) + " columns, got " +
                        std::to_string(tokens.size()));
        }
        for (std::size_t d = 0; d < 3; ++d) {
            coords.push_back(parse_double(tokens[d], reader));
        }
        if (width >= 6) {
            for (std::size_t d = 3; d < 6; ++d) {
                normals.push_back(parse_double(tokens[d], reader));
            }
        }
        if (width == 4 || width == 7) {
            labels.push_back(parse_index(tokens[width - 1], reader));
        }
    }
    const std::size_t n = coords.size() / 3;

    XyzCloud cloud;
    cloud.coords = Matrix(n, 3);
    std::copy(coords.begin(), coords.end(), cloud.coords.data.begin());
    if (!normals.empty()) {
        cloud.normals = Matrix(n, 3);
        std::copy(normals.begin(), normals.end(), cloud.normals.data.begin());
    }
    cloud.labels = std::move(labels);
    return cloud;
}

void save_xyz(const std::string& path, const XyzCloud& cloud) {
    const std::size_t n = cloud.coords.rows;
    if (cloud.coords.cols != 3) throw ConfigError("xyz clouds are 3-dimensional");
    if (!cloud.normals.data.empty() &&
        (cloud.normals.rows != n || cloud.normals.cols != 3)) {
        throw ConfigError("normals must be n x 3 when present");
    }
    if (!cloud.labels.empty() && cloud.labels.size() != n) {
        throw ConfigError("labels must match the point count when present");
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < 3; ++d) {
            std::snprintf(buf, sizeof(buf), "%.17g", cloud.coords(i, d));
            out << (d == 0 ? "" : " ") << buf;
        }
        if (!cloud.normals.data.empty()) {
            for (std::size_t d = 0; d < 3; ++d) {
                std::snprintf(buf, sizeof(buf), "%.17g", cloud.normals(i, d));
                out << ' ' << buf;
            }
        }
        if (!cloud.labels.empty()) out << ' ' << cloud.labels[i];
        out << '\n';
    }
    if (!out) throw DataError("failed writing file: " + path);
}

// ---------------------------------------------------------------------------
// Synthetic shapes
// ---------------------------------------------------------------------------

namespace {

void random_rotation(Rng& rng, double r[3][3]) {
    // Uniform over rotations: normalized quaternion from four normal draws.
    double q[4];
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& qi : q) {
            qi = rng.normal();
            norm += qi * qi;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& qi : q) qi /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    r[0][0] = 1 - 2 * (y * y + z * z);
    r[0][1] = 2 * (x * y - w * z);
    r[0][2] = 2 * (x * z + w * y);
    r[1][0] = 2 * (x * y + w * z);
    r[1][1] = 1 - 2 * (x * x + z * z);
    r[1][2] = 2 * (y * z - w * x);
    r[2][0] = 2 * (x * z - w * y);
    r[2][1] = 2 * (y * y + x * x) * 0.0 + 2 * (y * z + w * x);
    r[2][2] = 1 - 2 * (x * x + y * y);
}

void apply_rotation(const double r[3][3], Matrix& coords) {
    for (std::size_t i = 0; i < coords.rows; ++i) {
        double* p = coords.row_ptr(i);
        const double v[3] = {p[0], p[1], p[2]};
        for (std::size_t a = 0; a < 3; ++a) {
            p[a] = r[a][0] * v[0] + r[a][1] * v[1] + r[a][2] * v[2];
        }
    }
}

void sphere_point(Rng& rng, double* out) {
    double norm = 0.0;
    do {
        norm = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
            out[d] = rng.normal();
            norm += out[d] * out[d];
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < 3; ++d) out[d] /= norm;
}

void cube_point(Rng& rng, double* out) {
    const std::size_t face = rng.below(6);
    const std::size_t axis = face / 2;
    out[axis] = face % 2 == 0 ? -1.0 : 1.0;
    out[(axis + 1) % 3] = rng.uniform(-1.0, 1.0);
    out[(axis + 2) % 3] = rng.uniform(-1.0, 1.0);
}

constexpr double kCylRadius = 0.5;
constexpr double kCylHalfHeight = 1.0;

/// Area-proportional point on the cylinder surface; reports whether it lies
/// on the wall (vs one of the caps).
bool cylinder_point(Rng& rng, double* out) {
    const double wall_area = 2.0 * M_PI * kCylRadius * (2.0 * kCylHalfHeight);
    const double cap_area = M_PI * kCylRadius * kCylRadius;
    const double total = wall_area + 2.0 * cap_area;
    const double pick = rng.uniform01() * total;
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    if (pick < wall_area) {
        out[0] = kCylRadius * std::cos(theta);
        out[1] = kCylRadius * std::sin(theta);
        out[2] = rng.uniform(-kCylHalfHeight, kCylHalfHeight);
        return true;
    }
    const double r = kCylRadius * std::sqrt(rng.uniform01());
    out[0] = r * std::cos(theta);
    out[1] = r * std::sin(theta);
    out[2] = pick < wall_area + cap_area ? kCylHalfHeight : -kCylHalfHeight;
    return false;
}

void disk_point(Rng& rng, double* out) {
    const double r = std::sqrt(rng.uniform01());
    const double theta = rng.uniform(0.0, 2.0 * M_PI);
    out[0] = r * std::cos(theta);
    out[1] = r * std::sin(theta);
    out[2] = 0.0;
}

void add_noise(Rng& rng, double noise, Matrix& coords) {
    if (noise <= 0.0) return;
    for (double& v : coords.data) v += noise * rng.normal();
}

} // namespace

Dataset synth_shapes(std::size_t n_per_class, std::size_t n_points, double noise,
                     std::uint64_t seed) {
    if (n_per_class == 0 || n_points == 0) {
        throw ConfigError("shape dataset needs at least one item and one point");
    }
    Dataset ds;
    ds.class_names = {"sphere", "cube", "cylinder", "disk"};
    Rng rng(seed);
    for (std::size_t cls = 0; cls < 4; ++cls) {
        for (std::size_t item = 0; item < n_per_class; ++item) {
            Item it;
            it.label = cls;
            it.cloud.coords = Matrix(n_points, 3);
            for (std::size_t i = 0; i < n_points; ++i) {
                double* p = it.cloud.coords.row_ptr(i);
                switch (cls) {
                    case 0: sphere_point(rng, p); break;
                    case 1: cube_point(rng, p); break;
                    case 2: cylinder_point(rng, p); break;
                    default: disk_point(rng, p); break;
                }
            }
            add_noise(rng, noise, it.cloud.coords);
            double r[3][3];
            random_rotation(rng, r);
            apply_rotation(r, it.cloud.coords);
            it.cloud.feats = Matrix(n_points, 0);
            ds.items.push_back(std::move(it));
        }
    }
    return ds;
}

Dataset synth_cylinders(std::size_t n_items, std::size_t n_points, double noise,
                        std::uint64_t seed) {
    if (n_items == 0 || n_points == 0) {
        throw ConfigError("cylinder dataset needs at least one item and one point");
    }
    Dataset ds;
    ds.class_names = {"wall", "caps"};
    Rng rng(seed);
    for (std::size_t item = 0; item < n_items; ++item) {
        Item it;
        it.cloud.coords = Matrix(n_points, 3);
        it.point_labels.resize(n_points);
        for (std::size_t i = 0; i < n_points; ++i) {
            const bool wall = cylinder_point(rng, it.cloud.coords.row_ptr(i));
            it.point_labels[i] = wall ? 0 : 1;
        }
        add_noise(rng, noise, it.cloud.coords);
        double r[3][3];
        random_rotation(rng, r);
        apply_rotation(r, it.cloud.coords);
        it.cloud.feats = Matrix(n_points, 0);
        ds.items.push_back(std::move(it));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset directory serialization
// ---------------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::string& dir) {
    for (const Item& it : ds.items) {
        if (it.cloud.coords.cols != 3 || it.cloud.feats.cols != 0) {
            throw ConfigError(
                "only 3-d clouds without feature channels serialize to xyz directories");
        }
    }
    std::filesystem::create_directories(dir);

    std::ofstream manifest(dir + "/manifest.txt", std::ios::binary);
    if (!manifest) throw DataError("cannot write manifest in: " + dir);
    manifest << "split " << (ds.split.empty() ? "unsplit" : ds.split) << '\n';
    manifest << "classes " << ds.class_names.size() << '\n';
    for (std::size_t c = 0; c < ds.class_names.size(); ++c) {
        manifest << "class " << c << ' ' << ds.class_names[c] << '\n';
    }
    manifest << "items " << ds.items.size() << '\n';
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "item_%05zu.xyz", i);
        manifest << "item " << name << ' ' << ds.items[i].label << '\n';

        XyzCloud xyz;
        xyz.coords = ds.items[i].cloud.coords;
        xyz.labels = ds.items[i].point_labels;
        save_xyz(dir + "/" + name, xyz);
    }
    if (!manifest) throw DataError("failed writing manifest in: " + dir);
}

Dataset load_dataset(const std::string& dir) {
    TextReader reader(dir + "/manifest.txt");
    std::string line;
    Dataset ds;

    if (!reader.next(line)) reader.fail("empty manifest");
    std::vector<std::string> tokens = split_tokens(line);
    if (tokens.size() != 2 || tokens[0] != "split") reader.fail("expected split line");
    ds.split = tokens[1] == "unsplit" ? "" : tokens[1];

    if (!reader.next(line)) reader.fail("missing class count");
    tokens = split_tokens(line);
    if (tokens.size() != 2 || tokens[0] != "classes") reader.fail("expected classes line");
    const std::size_t n_classes = parse_index(tokens[1], reader);
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (!reader.next(line)) reader.fail("class list truncated");
        tokens = split_tokens(line);
        if (tokens.size() != 3 || tokens[0] != "class") reader.fail("expected class line");
        if (parse_index(tokens[1], reader) != c) reader.fail("class indices out of order");
        ds.class_names.push_back(tokens[2]);
    }

    if (!reader.next(line)) reader.fail("missing item count");
    tokens = split_tokens(line);
    if (tokens.size() != 2 || tokens[0] != "items") reader.fail("expected items line");
    const std::size_t n_items = parse_index(tokens[1], reader);
    for (std::size_t i = 0; i < n_items; ++i) {
        if (!reader.next(line)) reader.fail("item list truncated");
        tokens = split_tokens(line);
        if (tokens.size() != 3 || tokens[0] != "item") reader.fail("expected item line");

        Item it;
        it.label = parse_index(tokens[2], reader);
        if (!ds.class_names.empty() && it.label >= ds.class_names.size()) {
            reader.fail("item label out of range");
        }
        XyzCloud xyz = load_xyz(dir + "/" + tokens[1]);
        it.cloud.coords = std::move(xyz.coords);
        it.cloud.feats = Matrix(it.cloud.coords.rows, 0);
        it.point_labels = std::move(xyz.labels);
        ds.items.push_back(std::move(it));
    }
    return ds;
}

std::uint64_t content_hash(const Dataset& ds) {
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a offset basis
    const auto mix_byte = [&h](std::uint8_t b) {
        h ^= b;
        h *= 1099511628211ULL;
    };
    const auto mix_u64 = [&mix_byte](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) mix_byte(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    const auto mix_double = [&mix_u64](double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        mix_u64(bits);
    };
    const auto mix_string = [&](const std::string& s) {
        mix_u64(s.size());
        for (char c : s) mix_byte(static_cast<std::uint8_t>(c));
    };

    mix_u64(ds.class_names.size());
    for (const std::string& name : ds.class_names) mix_string(name);
    mix_u64(ds.items.size());
    for (const Item& it : ds.items) {
        mix_u64(it.cloud.coords.rows);
        mix_u64(it.cloud.coords.cols);
        for (double v : it.cloud.coords.data) mix_double(v);
        mix_u64(it.cloud.feats.cols);
        for (double v : it.cloud.feats.data) mix_double(v);
        mix_u64(it.label);
        mix_u64(it.point_labels.size());
        for (std::size_t l : it.point_labels) mix_u64(l);
    }
    return h;
}

// ---------------------------------------------------------------------------
// IDX image containers
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

} // namespace

IdxImages load_idx_images(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() < 16) throw DataError("IDX image file too short: " + path);
    if (read_be32(bytes, 0) != 2051) {
        throw DataError("bad IDX image magic (expected 2051): " + path);
    }
    IdxImages images;
    images.count = read_be32(bytes, 4);
    images.rows = read_be32(bytes, 8);
    images.cols = read_be32(bytes, 12);
    const std::size_t expected = 16 + images.count * images.rows * images.cols;
    if (bytes.size() != expected) {
        throw DataError("IDX image payload size mismatch: " + path);
    }
    images.pixels.assign(bytes.begin() + 16, bytes.end());
    return images;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
    const std::vector<std::uint8_t> bytes = read_all_bytes(path);
    if (bytes.size() < 8) throw DataError("IDX label file too short: " + path);
    if (read_be32(bytes, 0) != 2049) {
        throw DataError("bad IDX label magic (expected 2049): " + path);
    }
    const std::size_t count = read_be32(bytes, 4);
    if (bytes.size() != 8 + count) throw DataError("IDX label payload size mismatch: " + path);
    return std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end());
}

void save_idx_images(const std::string& path, const IdxImages& images) {
    if (images.pixels.size() != images.count * images.rows * images.cols) {
        throw ConfigError("IDX image pixel buffer does not match its dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    write_be32(out, 2051);
    write_be32(out, static_cast<std::uint32_t>(images.count));
    write_be32(out, static_cast<std::uint32_t>(images.rows));
    write_be32(out, static_cast<std::uint32_t>(images.cols));
    out.write(reinterpret_cast<const char*>(images.pixels.data()),
              static_cast<std::streamsize>(images.pixels.size()));
    if (!out) throw DataError("failed writing file: " + path);
}

void save_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    write_be32(out, 2049);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
    if (!out) throw DataError("failed writing file: " + path);
}

// ---------------------------------------------------------------------------
// Images as planar point clouds
// ---------------------------------------------------------------------------

Cloud image_to_points(const std::uint8_t* pixels, std::size_t rows, std::size_t cols,
                      PixelMode mode, std::size_t n_sub) {
    if (rows == 0 || cols == 0) throw ConfigError("image must have pixels");
    const std::size_t total = rows * cols;

    std::vector<std::size_t> keep;
    if (mode == PixelMode::full_grid) {
        keep.resize(total);
        std::iota(keep.begin(), keep.end(), std::size_t{0});
    } else {
        if (n_sub == 0 || n_sub > total) {
            throw ConfigError("subsample size must be in [1, pixel count]");
        }
        keep.resize(total);
        std::iota(keep.begin(), keep.end(), std::size_t{0});
        // Brightest first; equal intensities stay in row-major order.
        std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
            return pixels[a] > pixels[b];
        });
        keep.resize(n_sub);
    }

    Cloud cloud;
    cloud.coords = Matrix(keep.size(), 2);
    cloud.feats = Matrix(keep.size(), 1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        const std::size_t r = keep[i] / cols;
        const std::size_t c = keep[i] % cols;
        // Pixel centers fill [-1,1]^2; image rows run top to bottom.
        cloud.coords(i, 0) = (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(cols) - 1.0;
        cloud.coords(i, 1) = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(rows);
        cloud.feats(i, 0) = static_cast<double>(pixels[keep[i]]) / 255.0;
    }
    return cloud;
}

Dataset image_dataset(const std::string& images_path, const std::string& labels_path,
                      PixelMode mode, std::size_t n_sub, std::size_t limit,
                      const std::string& split) {
    const IdxImages images = load_idx_images(images_path);
    const std::vector<std::uint8_t> labels = load_idx_labels(labels_path);
    if (images.count != labels.size()) {
        throw DataError("image and label counts differ (" + std::to_string(images.count) +
                        " vs " + std::to_string(labels.size()) + ")");
    }
    std::size_t n = images.count;
    if (limit > 0) n = std::min(n, limit);

    Dataset ds;
    ds.split = split;
    std::uint8_t max_label = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) max_label = std::max(max_label, labels[i]);
    for (std::size_t c = 0; c <= max_label; ++c) ds.class_names.push_back(std::to_string(c));

    const std::size_t stride = images.rows * images.cols;
    for (std::size_t i = 0; i < n; ++i) {
        Item it;
        it.label = labels[i];
        it.cloud = image_to_points(images.pixels.data() + i * stride, images.rows,
                                   images.cols, mode, n_sub);
        ds.items.push_back(std::move(it));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic stroke digits
// ---------------------------------------------------------------------------

namespace {

struct Segment {
    double ax, ay, bx, by;
};

void add_line(std::vector<Segment>& strokes, double ax, double ay, double bx, double by) {
    strokes.push_back({ax, ay, bx, by});
}

void add_polyline(std::vector<Segment>& strokes,
                  std::initializer_list<std::pair<double, double>> pts) {
    const auto* prev = pts.begin();
    for (const auto* it = pts.begin() + 1; it != pts.end(); ++it) {
        add_line(strokes, prev->first, prev->second, it->first, it->second);
        prev = it;
    }
}

void add_ellipse(std::vector<Segment>& strokes, double cx, double cy, double rx, double ry,
                 double from = 0.0, double to = 2.0 * M_PI, std::size_t n = 12) {
    double px = cx + rx * std::cos(from);
    double py = cy + ry * std::sin(from);
    for (std::size_t i = 1; i <= n; ++i) {
        const double t = from + (to - from) * static_cast<double>(i) / static_cast<double>(n);
        const double x = cx + rx * std::cos(t);
        const double y = cy + ry * std::sin(t);
        add_line(strokes, px, py, x, y);
        px = x;
        py = y;
    }
}

/// Stroke skeleton of one digit in the unit square, y pointing up.
std::vector<Segment> digit_strokes(std::size_t digit) {
    std::vector<Segment> s;
    switch (digit) {
        case 0:
            add_ellipse(s, 0.5, 0.5, 0.26, 0.38);
            break;
        case 1:
            add_polyline(s, {{0.35, 0.72}, {0.52, 0.9}, {0.52, 0.1}});
            break;
        case 2:
            add_ellipse(s, 0.5, 0.68, 0.26, 0.22, 0.85 * M_PI, -0.1 * M_PI, 8);
            add_polyline(s, {{0.72, 0.6}, {0.24, 0.12}, {0.78, 0.12}});
            break;
        case 3:
            add_ellipse(s, 0.47, 0.7, 0.25, 0.2, 0.75 * M_PI, -0.4 * M_PI, 8);
            add_ellipse(s, 0.47, 0.29, 0.28, 0.21, 0.4 * M_PI, -0.75 * M_PI, 8);
            break;
        case 4:
            add_polyline(s, {{0.66, 0.1}, {0.66, 0.9}, {0.2, 0.34}, {0.82, 0.34}});
            break;
        case 5:
            add_polyline(s, {{0.74, 0.88}, {0.3, 0.88}, {0.28, 0.54}});
            add_ellipse(s, 0.48, 0.35, 0.26, 0.24, 0.6 * M_PI, -0.8 * M_PI, 9);
            break;
        case 6:
            add_polyline(s, {{0.64, 0.88}, {0.36, 0.52}, {0.28, 0.3}});
            add_ellipse(s, 0.5, 0.28, 0.22, 0.19, 0.0, 2.0 * M_PI, 10);
            break;
        case 7:
            add_polyline(s, {{0.22, 0.88}, {0.78, 0.88}, {0.42, 0.1}});
            break;
        case 8:
            add_ellipse(s, 0.5, 0.69, 0.2, 0.17, 0.0, 2.0 * M_PI, 10);
            add_ellipse(s, 0.5, 0.3, 0.24, 0.2, 0.0, 2.0 * M_PI, 10);
            break;
        default:
            add_ellipse(s, 0.48, 0.66, 0.21, 0.19, 0.0, 2.0 * M_PI, 10);
            add_polyline(s, {{0.69, 0.66}, {0.58, 0.1}});
            break;
    }
    return s;
}

double point_segment_distance(double px, double py, const Segment& s) {
    const double dx = s.bx - s.ax;
    const double dy = s.by - s.ay;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - s.ax) * dx + (py - s.ay) * dy) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    const double cx = s.ax + t * dx;
    const double cy = s.ay + t * dy;
    return std::sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy));
}

} // namespace

DigitSet synth_digit_images(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ConfigError("digit count must be positive");
    constexpr std::size_t kSide = 28;

    DigitSet set;
    set.images.count = n;
    set.images.rows = kSide;
    set.images.cols = kSide;
    set.images.pixels.assign(n * kSide * kSide, 0);
    set.labels.resize(n);

    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t digit = rng.below(10);
        set.labels[i] = static_cast<std::uint8_t>(digit);

        // Per-item jitter: slight anisotropic scale, rotation, and shift.
        const double sx = rng.uniform(0.78, 1.05);
        const double sy = rng.uniform(0.78, 1.05);
        const double angle = rng.uniform(-0.16, 0.16);
        const double tx = rng.uniform(-0.06, 0.06);
        const double ty = rng.uniform(-0.06, 0.06);
        const double thickness = rng.uniform(0.05, 0.08);
        const double ca = std::cos(angle), sa = std::sin(angle);

        std::vector<Segment> strokes = digit_strokes(digit);
        for (Segment& seg : strokes) {
            const auto warp = [&](double& x, double& y) {
                const double u = (x - 0.5) * sx;
                const double v = (y - 0.5) * sy;
                x = 0.5 + ca * u - sa * v + tx;
                y = 0.5 + sa * u + ca * v + ty;
            };
            warp(seg.ax, seg.ay);
            warp(seg.bx, seg.by);
        }

        std::uint8_t* img = set.images.pixels.data() + i * kSide * kSide;
        for (std::size_t r = 0; r < kSide; ++r) {
            for (std::size_t c = 0; c < kSide; ++c) {
                const double px = (static_cast<double>(c) + 0.5) / kSide;
                const double py = 1.0 - (static_cast<double>(r) + 0.5) / kSide;
                double d = 1e9;
                for (const Segment& seg : strokes) {
                    d = std::min(d, point_segment_distance(px, py, seg));
                }
                const double intensity = std::max(0.0, 1.0 - d / thickness);
                img[r * kSide + c] = static_cast<std::uint8_t>(std::lround(255.0 * intensity));
            }
        }
    }
    return set;
}

} // namespace specpoint::data
