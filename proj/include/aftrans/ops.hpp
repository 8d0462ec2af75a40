#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "aftrans/tensor.hpp"

namespace aftrans {

namespace detail {

template <typename T>
Tensor<T> make_output(std::vector<std::size_t> shape, bool needs_grad) {
    return Tensor<T>::zeros(std::move(shape), needs_grad);
}

template <typename T>
void attach(Tensor<T>& out, std::vector<Tensor<T>> parents,
            std::function<void(Tensor<T>&)> bw) {
    if (!out.requires_grad) return;
    out.node = std::make_shared<Node<T>>();
    out.node->parents = std::move(parents);
    out.node->backward = std::move(bw);
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: both operands must be rank-2");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = detail::make_output<T>({m, n}, a.requires_grad || b.requires_grad);
    const T* pa = a.data->data();
    const T* pb = b.data->data();
    T* po = out.data->data();
    for (std::size_t i = 0; i < m; ++i) {
        T* orow = po + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T aik = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (std::size_t j = 0; j < n; ++j)
                orow[j] += aik * brow[j];
        }
    }
    detail::attach<T>(out, {a, b}, [m, k, n](Tensor<T>& o) {
        auto& a2 = o.node->parents[0];
        auto& b2 = o.node->parents[1];
        const T* go = o.grad->data();
        if (a2.requires_grad) {
            // dA = dO * B^T
            T* ga = a2.grad->data();
            const T* pb2 = b2.data->data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    T acc = T(0);
                    const T* gr = go + i * n;
                    const T* br = pb2 + kk * n;
                    for (std::size_t j = 0; j < n; ++j)
                        acc += gr[j] * br[j];
                    ga[i * k + kk] += acc;
                }
        }
        if (b2.requires_grad) {
            // dB = A^T * dO
            T* gb = b2.grad->data();
            const T* pa2 = a2.data->data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const T aik = pa2[i * k + kk];
                    const T* gr = go + i * n;
                    T* gbr = gb + kk * n;
                    for (std::size_t j = 0; j < n; ++j)
                        gbr[j] += aik * gr[j];
                }
        }
    });
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: rank-2 only");
    const std::size_t r = x.rows(), c = x.cols();
    auto out = detail::make_output<T>({c, r}, x.requires_grad);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(j, i) = x.at(i, j);
    detail::attach<T>(out, {x}, [r, c](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                (*p.grad)[i * c + j] += (*o.grad)[j * r + i];
    });
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) throw ShapeError("add: shape mismatch");
    auto out = detail::make_output<T>(a.shape, a.requires_grad || b.requires_grad);
    for (std::size_t i = 0; i < a.numel(); ++i)
        (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    detail::attach<T>(out, {a, b}, [](Tensor<T>& o) {
        for (auto& p : o.node->parents) {
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < o.numel(); ++i)
                (*p.grad)[i] += (*o.grad)[i];
        }
    });
    return out;
}

/// x: [R,C], bias: [C]; adds the bias to every row.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& bias) {
    if (x.rank() != 2 || bias.numel() != x.cols())
        throw ShapeError("add_rowwise: bias length must equal column count");
    const std::size_t r = x.rows(), c = x.cols();
    auto out = detail::make_output<T>(x.shape, x.requires_grad || bias.requires_grad);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(i, j) = x.at(i, j) + (*bias.data)[j];
    detail::attach<T>(out, {x, bias}, [r, c](Tensor<T>& o) {
        auto& px = o.node->parents[0];
        auto& pb = o.node->parents[1];
        if (px.requires_grad)
            for (std::size_t i = 0; i < r * c; ++i) (*px.grad)[i] += (*o.grad)[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    (*pb.grad)[j] += (*o.grad)[i * c + j];
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape != b.shape) throw ShapeError("mul: shape mismatch");
    auto out = detail::make_output<T>(a.shape, a.requires_grad || b.requires_grad);
    for (std::size_t i = 0; i < a.numel(); ++i)
        (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    detail::attach<T>(out, {a, b}, [](Tensor<T>& o) {
        auto& a2 = o.node->parents[0];
        auto& b2 = o.node->parents[1];
        if (a2.requires_grad)
            for (std::size_t i = 0; i < o.numel(); ++i)
                (*a2.grad)[i] += (*o.grad)[i] * (*b2.data)[i];
        if (b2.requires_grad)
            for (std::size_t i = 0; i < o.numel(); ++i)
                (*b2.grad)[i] += (*o.grad)[i] * (*a2.data)[i];
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    auto out = detail::make_output<T>(x.shape, x.requires_grad);
    for (std::size_t i = 0; i < x.numel(); ++i)
        (*out.data)[i] = (*x.data)[i] * c;
    detail::attach<T>(out, {x}, [c](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.numel(); ++i)
            (*p.grad)[i] += (*o.grad)[i] * c;
    });
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    auto out = detail::make_output<T>(x.shape, x.requires_grad);
    for (std::size_t i = 0; i < x.numel(); ++i)
        (*out.data)[i] = (*x.data)[i] > T(0) ? (*x.data)[i] : T(0);
    detail::attach<T>(out, {x}, [](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.numel(); ++i)
            if ((*p.data)[i] > T(0)) (*p.grad)[i] += (*o.grad)[i];
    });
    return out;
}

/// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    auto out = detail::make_output<T>(x.shape, x.requires_grad);
    const double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = static_cast<double>((*x.data)[i]);
        (*out.data)[i] = static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    detail::attach<T>(out, {x}, [inv_sqrt2](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        const double inv_sqrt2pi = 0.3989422804014326779;
        for (std::size_t i = 0; i < o.numel(); ++i) {
            const double v = static_cast<double>((*p.data)[i]);
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            (*p.grad)[i] += (*o.grad)[i] * static_cast<T>(cdf + v * pdf);
        }
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    auto out = detail::make_output<T>(x.shape, x.requires_grad);
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double v = static_cast<double>((*x.data)[i]);
        (*out.data)[i] = static_cast<T>(1.0 / (1.0 + std::exp(-v)));
    }
    detail::attach<T>(out, {x}, [](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < o.numel(); ++i) {
            const T s = (*o.data)[i];
            (*p.grad)[i] += (*o.grad)[i] * s * (T(1) - s);
        }
    });
    return out;
}

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range");
    const std::size_t len = x.shape[axis];
    if (len == 0) throw ShapeError("softmax: empty axis");
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];

    auto out = detail::make_output<T>(x.shape, x.requires_grad);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = (*x.data)[base];
            for (std::size_t i = 1; i < len; ++i)
                mx = std::max(mx, (*x.data)[base + i * inner]);
            double denom = 0;
            for (std::size_t i = 0; i < len; ++i) {
                const double e = std::exp(static_cast<double>((*x.data)[base + i * inner] - mx));
                (*out.data)[base + i * inner] = static_cast<T>(e);
                denom += e;
            }
            for (std::size_t i = 0; i < len; ++i)
                (*out.data)[base + i * inner] = static_cast<T>(
                    static_cast<double>((*out.data)[base + i * inner]) / denom);
        }
    detail::attach<T>(out, {x}, [len, inner, outer](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        // dx = y * (dy - sum(dy * y))
        for (std::size_t ob = 0; ob < outer; ++ob)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = ob * len * inner + in;
                T dot = T(0);
                for (std::size_t i = 0; i < len; ++i)
                    dot += (*o.grad)[base + i * inner] * (*o.data)[base + i * inner];
                for (std::size_t i = 0; i < len; ++i)
                    (*p.grad)[base + i * inner] +=
                        (*o.data)[base + i * inner] * ((*o.grad)[base + i * inner] - dot);
            }
    });
    return out;
}

/// Per-row (last-axis) normalization with learned affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    if (x.rank() == 0) throw ShapeError("layer_norm: rank-0 input");
    const std::size_t c = x.shape.back();
    if (gain.numel() != c || bias.numel() != c)
        throw ShapeError("layer_norm: gain/bias must match last-axis extent");
    const std::size_t r = x.numel() / c;
    auto out = detail::make_output<T>(x.shape, x.requires_grad || gain.requires_grad || bias.requires_grad);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = x.data->data() + i * c;
        double mean = 0;
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0;
        for (std::size_t j = 0; j < c; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t j = 0; j < c; ++j)
            (*out.data)[i * c + j] = static_cast<T>(
                (row[j] - mean) * inv * (*gain.data)[j] + (*bias.data)[j]);
    }
    detail::attach<T>(out, {x, gain, bias}, [r, c, eps](Tensor<T>& o) {
        auto& px = o.node->parents[0];
        auto& pg = o.node->parents[1];
        auto& pb = o.node->parents[2];
        for (std::size_t i = 0; i < r; ++i) {
            const T* row = px.data->data() + i * c;
            double mean = 0;
            for (std::size_t j = 0; j < c; ++j) mean += row[j];
            mean /= static_cast<double>(c);
            double var = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double d = row[j] - mean;
                var += d * d;
            }
            var /= static_cast<double>(c);
            const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));

            double sum_dy = 0, sum_dy_xhat = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double xhat = (row[j] - mean) * inv;
                const double dy = static_cast<double>((*o.grad)[i * c + j]) *
                                  static_cast<double>((*pg.data)[j]);
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
                if (pg.requires_grad)
                    (*pg.grad)[j] += (*o.grad)[i * c + j] * static_cast<T>(xhat);
                if (pb.requires_grad)
                    (*pb.grad)[j] += (*o.grad)[i * c + j];
            }
            if (px.requires_grad) {
                const double n = static_cast<double>(c);
                for (std::size_t j = 0; j < c; ++j) {
                    const double xhat = (row[j] - mean) * inv;
                    const double dy = static_cast<double>((*o.grad)[i * c + j]) *
                                      static_cast<double>((*pg.data)[j]);
                    (*px.grad)[i * c + j] += static_cast<T>(
                        inv * (dy - sum_dy / n - xhat * sum_dy_xhat / n));
                }
            }
        }
    });
    return out;
}

/// Mean over the batch of -log softmax(logits)[label].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [B,C]");
    const std::size_t b = logits.rows(), c = logits.cols();
    if (labels.size() != b) throw ValueError("cross_entropy: label count must equal batch size");
    for (auto y : labels)
        if (y >= c) throw ValueError("cross_entropy: label out of range");

    auto out = detail::make_output<T>({1}, logits.requires_grad);
    double total = 0;
    for (std::size_t i = 0; i < b; ++i) {
        const T* row = logits.data->data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        total += std::log(denom) - (static_cast<double>(row[labels[i]]) - mx);
    }
    (*out.data)[0] = static_cast<T>(total / static_cast<double>(b));

    detail::attach<T>(out, {logits}, [b, c, labels](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        const T g = (*o.grad)[0] / static_cast<T>(b);
        for (std::size_t i = 0; i < b; ++i) {
            const T* row = p.data->data() + i * c;
            double mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double denom = 0;
            for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < c; ++j) {
                const double sm = std::exp(row[j] - mx) / denom;
                const double onehot = (j == labels[i]) ? 1.0 : 0.0;
                (*p.grad)[i * c + j] += g * static_cast<T>(sm - onehot);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    auto out = detail::make_output<T>({1}, x.requires_grad);
    double total = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) total += (*x.data)[i];
    (*out.data)[0] = static_cast<T>(total);
    detail::attach<T>(out, {x}, [](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.numel(); ++i)
            (*p.grad)[i] += (*o.grad)[0];
    });
    return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t offset, std::size_t len) {
    if (x.rank() != 2 || offset + len > x.cols())
        throw ShapeError("slice_cols: slice out of range");
    const std::size_t r = x.rows(), c = x.cols();
    auto out = detail::make_output<T>({r, len}, x.requires_grad);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j)
            out.at(i, j) = x.at(i, offset + j);
    detail::attach<T>(out, {x}, [r, c, offset, len](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j)
                (*p.grad)[i * c + offset + j] += (*o.grad)[i * len + j];
    });
    return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t offset, std::size_t len) {
    if (x.rank() != 2 || offset + len > x.rows())
        throw ShapeError("slice_rows: slice out of range");
    const std::size_t c = x.cols();
    auto out = detail::make_output<T>({len, c}, x.requires_grad);
    for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out.at(i, j) = x.at(offset + i, j);
    detail::attach<T>(out, {x}, [c, offset, len](Tensor<T>& o) {
        auto& p = o.node->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < c; ++j)
                (*p.grad)[(offset + i) * c + j] += (*o.grad)[i * c + j];
    });
    return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty input");
    const std::size_t r = parts[0].rows();
    std::size_t total = 0;
    bool rg = false;
    for (auto& p : parts) {
        if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
        total += p.cols();
        rg = rg || p.requires_grad;
    }
    auto out = detail::make_output<T>({r, total}, rg);
    std::size_t off = 0;
    for (auto& p : parts) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p.cols(); ++j)
                out.at(i, off + j) = p.at(i, j);
        off += p.cols();
    }
    detail::attach<T>(out, parts, [r, total](Tensor<T>& o) {
        std::size_t off2 = 0;
        for (auto& p : o.node->parents) {
            const std::size_t pc = p.cols();
            if (p.requires_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < pc; ++j)
                        (*p.grad)[i * pc + j] += (*o.grad)[i * total + off2 + j];
            off2 += pc;
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    const std::size_t c = parts[0].cols();
    std::size_t total = 0;
    bool rg = false;
    for (auto& p : parts) {
        if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
        total += p.rows();
        rg = rg || p.requires_grad;
    }
    auto out = detail::make_output<T>({total, c}, rg);
    std::size_t off = 0;
    for (auto& p : parts) {
        std::copy(p.data->begin(), p.data->end(), out.data->begin() + off * c);
        off += p.rows();
    }
    detail::attach<T>(out, parts, [c](Tensor<T>& o) {
        std::size_t off2 = 0;
        for (auto& p : o.node->parents) {
            if (p.requires_grad)
                for (std::size_t i = 0; i < p.numel(); ++i)
                    (*p.grad)[i] += (*o.grad)[off2 * c + i];
            off2 += p.rows();
        }
    });
    return out;
}

}  // namespace aftrans
