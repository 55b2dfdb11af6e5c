#include "stylefuse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

namespace stylefuse {

bool all_finite(const Matrix& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void check_finite(const Matrix& m, const std::string& what) {
    if (!all_finite(m)) {
        throw InvalidInputError(what + ": matrix contains NaN or Inf entries");
    }
}

// ===== structural ops =====

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.rows) + ")");
    }
    Matrix out(a.rows, b.cols, 0.0);
    // i-k-j order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) {
        throw ShapeError("matmul_bt: inner dimensions differ (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.cols) + ")");
    }
    Matrix out(a.rows, b.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* orow = out.row(i);
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += arow[k] * brow[k];
            }
            orow[j] = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ (" + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + ")");
    }
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix scale(const Matrix& m, double factor) {
    Matrix out = m;
    for (double& v : out.data) v *= factor;
    return out;
}

Matrix relu(const Matrix& m) {
    Matrix out = m;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix vstack(const std::vector<Matrix>& parts) {
    if (parts.empty()) throw ShapeError("vstack: no parts given");
    const std::size_t cols = parts.front().cols;
    std::size_t rows = 0;
    for (const Matrix& p : parts) {
        if (p.cols != cols) {
            throw ShapeError("vstack: column counts differ (" + std::to_string(cols) + " vs " +
                             std::to_string(p.cols) + ")");
        }
        rows += p.rows;
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const Matrix& p : parts) {
        std::copy(p.data.begin(), p.data.end(), out.data.begin() + at);
        at += p.size();
    }
    return out;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " + std::to_string(m.rows) +
                         " rows");
    }
    Matrix out(end - begin, m.cols);
    std::copy(m.data.begin() + begin * m.cols, m.data.begin() + end * m.cols, out.data.begin());
    return out;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.cols) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds for " + std::to_string(m.cols) +
                         " cols");
    }
    Matrix out(m.rows, end - begin);
    for (std::size_t i = 0; i < m.rows; ++i) {
        std::copy(m.row(i) + begin, m.row(i) + end, out.row(i));
    }
    return out;
}

double mean_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "mean_abs_diff");
    if (a.empty()) return 0.0;
    KahanSum acc;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc.add(std::abs(a.data[i] - b.data[i]));
    }
    return acc.value() / static_cast<double>(a.size());
}

double frobenius_norm(const Matrix& m) {
    KahanSum acc;
    for (double v : m.data) acc.add(v * v);
    return std::sqrt(acc.value());
}

// ===== softmax =====

Matrix row_softmax(const Matrix& logits) {
    if (logits.rows == 0 || logits.cols == 0) {
        throw ShapeError("row_softmax: empty input");
    }
    check_finite(logits, "row_softmax");
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double rowmax = in[0];
        for (std::size_t j = 1; j < logits.cols; ++j) rowmax = std::max(rowmax, in[j]);
        KahanSum denom;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            o[j] = std::exp(in[j] - rowmax);
            denom.add(o[j]);
        }
        const double inv = 1.0 / denom.value();
        for (std::size_t j = 0; j < logits.cols; ++j) o[j] *= inv;
    }
    return out;
}

// ===== norms =====

double row_l1(const Matrix& m, std::size_t i) {
    KahanSum acc;
    const double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) acc.add(std::abs(r[j]));
    return acc.value();
}

double row_l2(const Matrix& m, std::size_t i) {
    KahanSum acc;
    const double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) acc.add(r[j] * r[j]);
    return std::sqrt(acc.value());
}

double max_row_l2(const Matrix& m) {
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) best = std::max(best, row_l2(m, i));
    return best;
}

Norms norms(const Matrix& m) {
    check_finite(m, "norms");
    Norms out;
    out.row_l1.resize(m.rows);
    out.row_l2.resize(m.rows);
    KahanSum fro;
    for (std::size_t i = 0; i < m.rows; ++i) {
        out.row_l1[i] = row_l1(m, i);
        out.row_l2[i] = row_l2(m, i);
        const double* r = m.row(i);
        for (std::size_t j = 0; j < m.cols; ++j) fro.add(r[j] * r[j]);
    }
    out.frobenius = std::sqrt(fro.value());
    return out;
}

// ===== RNG =====

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t splitmix64(std::uint64_t& x) {
    x += kGolden;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    // xoshiro256++ seeded through splitmix64, per the generator's reference
    // initialization recipe.
    std::uint64_t sm = seed;
    state_[0] = splitmix64(sm);
    state_[1] = splitmix64(sm);
    state_[2] = splitmix64(sm);
    state_[3] = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_gaussian() {
    if (has_cached_gaussian_) {
        has_cached_gaussian_ = false;
        return cached_gaussian_;
    }
    // Marsaglia polar method: only sqrt/log, no trig.
    double u, v, s;
    do {
        u = 2.0 * next_double() - 1.0;
        v = 2.0 * next_double() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    cached_gaussian_ = v * factor;
    has_cached_gaussian_ = true;
    return u * factor;
}

Rng Rng::child(std::uint64_t index) const {
    // Mix (seed, index) into a fresh seed; same pair -> same stream, so
    // trial k's stream is independent of how many trials ran before it.
    std::uint64_t x = seed_ ^ (kGolden + index * 0xD1B54A32D192ED03ULL);
    std::uint64_t mixed = splitmix64(x);
    return Rng(mixed);
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean, double stddev, Rng& rng) {
    if (!std::isfinite(mean) || !std::isfinite(stddev) || stddev < 0.0) {
        throw InvalidInputError("gaussian_matrix: mean/stddev must be finite with stddev >= 0");
    }
    Matrix out(rows, cols);
    for (double& v : out.data) v = mean + stddev * rng.next_gaussian();
    return out;
}

// ===== parallel map =====

void parallel_for_index(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    // Static stride partition: worker w handles i = w, w+workers, ... Slot
    // assignment is fixed up front, so results do not depend on scheduling.
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace stylefuse
