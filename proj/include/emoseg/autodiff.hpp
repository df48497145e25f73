#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "emoseg/ops.hpp"

namespace emoseg {

// Reverse-mode tape over the kernels in ops.hpp. Nodes are created in forward
// order; backward() walks them in reverse, accumulating into per-node gradient
// buffers. One tape instance is one forward pass.
template <typename S>
class Tape {
public:
    using Id = int;

    Id input(Tensor<S> v, bool requires_grad = false) {
        return push(std::move(v), requires_grad, {});
    }

    const Tensor<S>& val(Id id) const { return nodes_[static_cast<size_t>(id)].v; }
    const Tensor<S>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].g; }

    Id conv1x1(Id x, Id w, Id b) {
        auto out = ops::conv1x1(val(x), val(w), val(b));
        Id id = push(std::move(out), true, {x, w, b});
        nodes_.back().back = [this, x, w, b, id] {
            ops::conv1x1_backward(val(x), val(w), grad_ref(id), grad_ref(x), grad_ref(w),
                                  grad_ref(b));
        };
        return id;
    }

    Id conv3x3(Id x, Id w, Id b, int stride) {
        auto out = ops::conv3x3(val(x), val(w), val(b), stride);
        Id id = push(std::move(out), true, {x, w, b});
        nodes_.back().back = [this, x, w, b, id, stride] {
            ops::conv3x3_backward(val(x), val(w), grad_ref(id), stride, grad_ref(x), grad_ref(w),
                                  grad_ref(b));
        };
        return id;
    }

    Id depthwise_conv3x3(Id x, Id w) {
        auto out = ops::depthwise_conv3x3(val(x), val(w));
        Id id = push(std::move(out), true, {x, w});
        nodes_.back().back = [this, x, w, id] {
            ops::depthwise_conv3x3_backward(val(x), val(w), grad_ref(id), grad_ref(x),
                                            grad_ref(w));
        };
        return id;
    }

    Id relu(Id x) {
        Id id = push(ops::relu(val(x)), true, {x});
        nodes_.back().back = [this, x, id] {
            const auto& xv = val(x);
            auto& gx = grad_ref(x);
            const auto& g = grad_ref(id);
            for (long i = 0; i < xv.numel(); ++i)
                if (xv[i] > S(0)) gx[i] += g[i];
        };
        return id;
    }

    Id sigmoid(Id x) {
        Id id = push(ops::sigmoid(val(x)), true, {x});
        nodes_.back().back = [this, x, id] {
            const auto& y = val(id);
            auto& gx = grad_ref(x);
            const auto& g = grad_ref(id);
            for (long i = 0; i < y.numel(); ++i) gx[i] += g[i] * y[i] * (S(1) - y[i]);
        };
        return id;
    }

    Id softmax_spatial(Id x) {
        Id id = push(ops::softmax_spatial(val(x)), true, {x});
        nodes_.back().back = [this, x, id] {
            ops::softmax_spatial_backward(val(id), grad_ref(id), grad_ref(x));
        };
        return id;
    }

    Id concat_channels(Id a, Id b) {
        Id id = push(ops::concat_channels(val(a), val(b)), true, {a, b});
        nodes_.back().back = [this, a, b, id] {
            const auto& g = grad_ref(id);
            auto& ga = grad_ref(a);
            auto& gb = grad_ref(b);
            const long na = ga.numel();
            for (long i = 0; i < na; ++i) ga[i] += g[i];
            for (long i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
        };
        return id;
    }

    Id hadamard(Id a, Id b) {
        Id id = push(ops::hadamard(val(a), val(b)), true, {a, b});
        nodes_.back().back = [this, a, b, id] {
            const auto& g = grad_ref(id);
            const auto& av = val(a);
            const auto& bv = val(b);
            auto& ga = grad_ref(a);
            auto& gb = grad_ref(b);
            for (long i = 0; i < g.numel(); ++i) {
                ga[i] += g[i] * bv[i];
                gb[i] += g[i] * av[i];
            }
        };
        return id;
    }

    Id add(Id a, Id b) {
        Id id = push(ops::add(val(a), val(b)), true, {a, b});
        nodes_.back().back = [this, a, b, id] {
            const auto& g = grad_ref(id);
            auto& ga = grad_ref(a);
            auto& gb = grad_ref(b);
            for (long i = 0; i < g.numel(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
        };
        return id;
    }

    Id bilinear_resize(Id x, int h2, int w2) {
        Id id = push(ops::bilinear_resize(val(x), h2, w2), true, {x});
        auto xshape = val(x).shape;
        nodes_.back().back = [this, x, id, xshape] {
            ops::bilinear_resize_backward(xshape, grad_ref(id), grad_ref(x));
        };
        return id;
    }

    Id maxpool_to(Id x, int h, int w) {
        std::vector<long> argmax;
        Id id = push(ops::maxpool_to(val(x), h, w, &argmax), true, {x});
        nodes_.back().back = [this, x, id, argmax = std::move(argmax)] {
            const auto& g = grad_ref(id);
            auto& gx = grad_ref(x);
            for (long i = 0; i < g.numel(); ++i) gx[argmax[static_cast<size_t>(i)]] += g[i];
        };
        return id;
    }

    // loss against a constant target (targets carry no gradient)
    Id mse(Id a, const Tensor<S>& target) {
        Id id = push(Tensor<S>::scalar(ops::mse(val(a), target)), true, {a});
        nodes_.back().back = [this, a, target, id] {
            const S g = grad_ref(id)[0];
            const auto& av = val(a);
            auto& ga = grad_ref(a);
            const S scale = S(2) / static_cast<S>(av.numel());
            for (long i = 0; i < av.numel(); ++i) ga[i] += g * scale * (av[i] - target[i]);
        };
        return id;
    }

    Id bce_with_logits(Id logits, const Tensor<S>& target) {
        Id id = push(Tensor<S>::scalar(ops::bce_with_logits(val(logits), target)), true, {logits});
        nodes_.back().back = [this, logits, target, id] {
            const S g = grad_ref(id)[0];
            const auto& z = val(logits);
            const auto sig = ops::sigmoid(z);
            auto& gz = grad_ref(logits);
            const S scale = g / static_cast<S>(z.numel());
            for (long i = 0; i < z.numel(); ++i) gz[i] += scale * (sig[i] - target[i]);
        };
        return id;
    }

    // out = a + coef * b, scalars
    Id scalar_axpy(Id a, S coef, Id b) {
        Id id = push(Tensor<S>::scalar(val(a)[0] + coef * val(b)[0]), true, {a, b});
        nodes_.back().back = [this, a, b, id, coef] {
            const S g = grad_ref(id)[0];
            grad_ref(a)[0] += g;
            grad_ref(b)[0] += coef * g;
        };
        return id;
    }

    Id scalar_scale(Id a, S coef) {
        Id id = push(Tensor<S>::scalar(coef * val(a)[0]), true, {a});
        nodes_.back().back = [this, a, id, coef] { grad_ref(a)[0] += coef * grad_ref(id)[0]; };
        return id;
    }

    void backward(Id loss) {
        if (backward_done_) throw NumericError("backward called twice without a new forward");
        if (val(loss).numel() != 1) throw ShapeError("backward: loss must be scalar");
        backward_done_ = true;
        grad_ref(loss)[0] = S(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            auto& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.g.numel() > 0) n.back();
        }
    }

private:
    struct Node {
        Tensor<S> v;
        Tensor<S> g;  // allocated lazily on first use
        std::function<void()> back;
        bool requires_grad = false;
    };

    Tensor<S>& grad_ref(Id id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.g.data.empty() && n.v.numel() > 0) n.g = Tensor<S>(n.v.shape);
        return n.g;
    }

    Id push(Tensor<S> v, bool requires_grad, std::initializer_list<Id> /*parents*/) {
        nodes_.push_back(Node{std::move(v), Tensor<S>{}, nullptr, requires_grad});
        return static_cast<Id>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace emoseg
