#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stylefuse {

// Thrown when an operand is structurally wrong (mismatched dimensions,
// empty where non-empty is required).
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown when operand values are unusable (NaN/Inf entries, out-of-range
// parameters).
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// ===== dense row-major matrix =====

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    bool same_shape(const Matrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

// Throws InvalidInputError if any entry is NaN or Inf. `what` names the
// offending operand in the error message.
void check_finite(const Matrix& m, const std::string& what);

bool all_finite(const Matrix& m);

// ===== elementwise / structural helpers =====

Matrix matmul(const Matrix& a, const Matrix& b);      // a(rows x k) * b(k x cols)
Matrix matmul_bt(const Matrix& a, const Matrix& b);   // a(rows x k) * b(cols x k)^T
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
Matrix relu(const Matrix& m);
Matrix vstack(const std::vector<Matrix>& parts);      // concatenate along rows
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);  // [begin, end)
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);  // [begin, end)

// Mean absolute difference over all entries; shapes must match.
double mean_abs_diff(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);

// ===== compensated accumulation =====

// Kahan-Babuska running sum. Used wherever many terms are folded so that
// accumulation error stays independent of term count.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double value) {
        double t = sum + value;
        if (std::abs(sum) >= std::abs(value)) {
            comp += (sum - t) + value;
        } else {
            comp += (value - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

// ===== numerically stable row softmax =====

// Softmax applied independently to each row after subtracting that row's
// maximum, so arbitrarily large logits cannot overflow. Input entries must
// be finite. Every output row sums to 1.
Matrix row_softmax(const Matrix& logits);

// ===== norms =====

struct Norms {
    std::vector<double> row_l1;  // per-row sum of absolute values
    std::vector<double> row_l2;  // per-row Euclidean norm
    double frobenius = 0.0;
};

Norms norms(const Matrix& m);

double row_l1(const Matrix& m, std::size_t i);
double row_l2(const Matrix& m, std::size_t i);
double max_row_l2(const Matrix& m);

// ===== deterministic splittable RNG =====

// Counter-derived xoshiro256++ stream. The engine and the Gaussian sampler
// are implemented here (not with std:: distributions) so that a given seed
// produces the identical sample sequence on every platform and standard
// library. child(k) derives an independent stream from (seed, k), which is
// what parallel trials use instead of sharing one stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1), 53-bit resolution.
    double next_double();

    // Standard normal via the Marsaglia polar method (deterministic
    // rejection loop; second sample of each pair is cached).
    double next_gaussian();

    // Independent stream derived from this stream's seed and an index.
    // Same (seed, index) always yields the same child stream.
    Rng child(std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_[4];
    double cached_gaussian_ = 0.0;
    bool has_cached_gaussian_ = false;
};

// rows x cols matrix of independent N(mean, stddev^2) draws, consumed from
// `rng` in row-major order. stddev must be >= 0 and finite.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double stddev, Rng& rng);

// ===== deterministic parallel map =====

// Evaluates fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency) and stores each result at index i. Output is identical for
// every thread count because slots are preassigned and each cell seeds its
// own RNG stream.
void parallel_for_index(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace stylefuse
