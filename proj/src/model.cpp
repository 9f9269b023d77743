#include "trimine/model.hpp"

#include "trimine/csv.hpp"
#include "trimine/error.hpp"
#include "trimine/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace trimine {

Parameters zeros_like(const Parameters& params) {
    Parameters out;
    out.reserve(params.size());
    for (const auto& layer : params) {
        out.push_back(DenseLayer{Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                                 Eigen::VectorXd::Zero(layer.bias.size())});
    }
    return out;
}

ProjectionModel::ProjectionModel(const ModelConfig& config, std::uint64_t seed) {
    if (config.input_dim == 0 || config.output_dim == 0) {
        throw ConfigError("projection model needs nonzero input and output dimensions");
    }
    std::vector<std::size_t> dims{config.input_dim};
    if (config.hidden_dim > 0) {
        dims.push_back(config.hidden_dim);
    }
    dims.push_back(config.output_dim);

    Rng rng(seed, Stream::Init);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(dims[l]);
        const auto out = static_cast<Eigen::Index>(dims[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) {
                layer.weight(r, c) = rng.uniform(-bound, bound);
            }
        }
        for (Eigen::Index r = 0; r < out; ++r) {
            layer.bias[r] = rng.uniform(-bound, bound);
        }
        layers_.push_back(std::move(layer));
    }
}

ProjectionModel::ProjectionModel(Parameters layers) : layers_(std::move(layers)) {
    if (layers_.empty()) {
        throw ConfigError("projection model needs at least one layer");
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].bias.size() != layers_[l].weight.rows()) {
            throw ConfigError("layer " + std::to_string(l) + ": bias length differs from weight rows");
        }
        if (l > 0 && layers_[l].weight.cols() != layers_[l - 1].weight.rows()) {
            throw ConfigError("layer " + std::to_string(l) + ": input width differs from previous output");
        }
    }
}

std::size_t ProjectionModel::input_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t ProjectionModel::output_dim() const {
    return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t ProjectionModel::parameter_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers_) {
        total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return total;
}

Eigen::VectorXd ProjectionModel::forward(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != input_dim()) {
        throw ValidationError("forward: input length " + std::to_string(x.size()) + " differs from model input " +
                              std::to_string(input_dim()));
    }
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        h = layers_[l].weight * h + layers_[l].bias;
        if (l + 1 < layers_.size()) {
            h = h.cwiseMax(0.0);
        }
    }
    return h;
}

Eigen::MatrixXd ProjectionModel::forward_rows(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != input_dim()) {
        throw ValidationError("forward: input width " + std::to_string(x.cols()) + " differs from model input " +
                              std::to_string(input_dim()));
    }
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Eigen::MatrixXd z = h * layers_[l].weight.transpose();
        z.rowwise() += layers_[l].bias.transpose();
        h = l + 1 < layers_.size() ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
    }
    return h;
}

Eigen::VectorXd flatten(const Parameters& params) {
    std::size_t total = 0;
    for (const auto& layer : params) {
        total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    Eigen::VectorXd flat(static_cast<Eigen::Index>(total));
    Eigen::Index at = 0;
    for (const auto& layer : params) {
        flat.segment(at, layer.weight.size()) = Eigen::Map<const Eigen::VectorXd>(layer.weight.data(), layer.weight.size());
        at += layer.weight.size();
        flat.segment(at, layer.bias.size()) = layer.bias;
        at += layer.bias.size();
    }
    return flat;
}

Eigen::VectorXd ProjectionModel::flatten() const {
    return trimine::flatten(layers_);
}

void ProjectionModel::assign(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
        throw ValidationError("assign: parameter vector has the wrong length");
    }
    Eigen::Index at = 0;
    for (auto& layer : layers_) {
        Eigen::Map<Eigen::VectorXd>(layer.weight.data(), layer.weight.size()) = flat.segment(at, layer.weight.size());
        at += layer.weight.size();
        layer.bias = flat.segment(at, layer.bias.size());
        at += layer.bias.size();
    }
}

double distance(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (u.size() != v.size()) {
        throw ValidationError("distance: vectors differ in length (" + std::to_string(u.size()) + " vs " +
                              std::to_string(v.size()) + ")");
    }
    return (u - v).squaredNorm();
}

double triplet_hinge(double d_anchor_positive, double d_anchor_negative, double margin) noexcept {
    return std::max(d_anchor_positive - d_anchor_negative + margin, 0.0);
}

LossEvaluation loss_and_gradients(const ProjectionModel& model, std::span<const Triplet> triplets,
                                  const Eigen::MatrixXd& inputs, double margin, BranchWeights weights) {
    if (!(margin > 0.0)) {
        throw ConfigError("triplet margin must be positive");
    }
    LossEvaluation eval;
    eval.gradients = zeros_like(model.layers());
    if (triplets.empty()) {
        return eval;
    }

    // Forward only the rows the triplets touch, keeping every layer's pre-activation.
    std::vector<std::size_t> rows;
    rows.reserve(triplets.size() * 3);
    for (const auto& t : triplets) {
        rows.insert(rows.end(), {t.anchor, t.positive, t.negative});
        if (t.branch == Branch::Class) {
            ++eval.class_triplets;
        } else {
            ++eval.box_triplets;
        }
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    auto local = [&](std::size_t global) {
        return static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), global) - rows.begin());
    };

    const auto& layers = model.layers();
    if (static_cast<std::size_t>(inputs.cols()) != model.input_dim()) {
        throw ValidationError("loss_and_gradients: input width differs from model input");
    }
    std::vector<Eigen::MatrixXd> activations; // activations[l] feeds layer l
    std::vector<Eigen::MatrixXd> pre;         // pre-activation of layer l
    activations.emplace_back(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= static_cast<std::size_t>(inputs.rows())) {
            throw ValidationError("loss_and_gradients: triplet index out of range");
        }
        activations[0].row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(rows[r]));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Eigen::MatrixXd z = activations[l] * layers[l].weight.transpose();
        z.rowwise() += layers[l].bias.transpose();
        pre.push_back(z);
        if (l + 1 < layers.size()) {
            activations.emplace_back(z.cwiseMax(0.0));
        }
    }
    const Eigen::MatrixXd& out = pre.back();

    const double class_scale = eval.class_triplets > 0 ? weights.class_weight / static_cast<double>(eval.class_triplets) : 0.0;
    const double box_scale = eval.box_triplets > 0 ? weights.box_weight / static_cast<double>(eval.box_triplets) : 0.0;

    Eigen::MatrixXd grad_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
    double class_sum = 0.0;
    double box_sum = 0.0;
    for (const auto& t : triplets) {
        const Eigen::Index a = local(t.anchor);
        const Eigen::Index p = local(t.positive);
        const Eigen::Index n = local(t.negative);
        const Eigen::VectorXd diff_ap = (out.row(a) - out.row(p)).transpose();
        const Eigen::VectorXd diff_an = (out.row(a) - out.row(n)).transpose();
        const double hinge = triplet_hinge(diff_ap.squaredNorm(), diff_an.squaredNorm(), margin);
        (t.branch == Branch::Class ? class_sum : box_sum) += hinge;
        if (hinge <= 0.0) {
            continue;
        }
        ++eval.active_triplets;
        const double scale = 2.0 * (t.branch == Branch::Class ? class_scale : box_scale);
        grad_out.row(a) += scale * (diff_ap - diff_an).transpose();
        grad_out.row(p) -= scale * diff_ap.transpose();
        grad_out.row(n) += scale * diff_an.transpose();
    }
    eval.class_loss = eval.class_triplets > 0 ? class_sum / static_cast<double>(eval.class_triplets) : 0.0;
    eval.box_loss = eval.box_triplets > 0 ? box_sum / static_cast<double>(eval.box_triplets) : 0.0;
    eval.loss = weights.class_weight * eval.class_loss + weights.box_weight * eval.box_loss;

    Eigen::MatrixXd delta = std::move(grad_out);
    for (std::size_t l = layers.size(); l-- > 0;) {
        eval.gradients[l].weight = delta.transpose() * activations[l];
        eval.gradients[l].bias = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = (delta * layers[l].weight).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return eval;
}

OptimizerState OptimizerState::for_model(const ProjectionModel& model, const AdamConfig& config, std::uint64_t seed) {
    OptimizerState state;
    state.config = config;
    state.first_moment = zeros_like(model.layers());
    state.second_moment = zeros_like(model.layers());
    state.seed = seed;
    return state;
}

void optimizer_step(ProjectionModel& model, const Parameters& gradients, OptimizerState& state) {
    auto& layers = model.layers();
    if (gradients.size() != layers.size() || state.first_moment.size() != layers.size()) {
        throw ValidationError("optimizer_step: gradient shape differs from model");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (gradients[l].weight.rows() != layers[l].weight.rows() || gradients[l].weight.cols() != layers[l].weight.cols() ||
            gradients[l].bias.size() != layers[l].bias.size()) {
            throw ValidationError("optimizer_step: gradient shape differs from model at layer " + std::to_string(l));
        }
        if (!gradients[l].weight.allFinite() || !gradients[l].bias.allFinite()) {
            throw NonFiniteError("non-finite gradient in layer " + std::to_string(l) + " at optimizer step " +
                                 std::to_string(state.step + 1));
        }
    }

    const AdamConfig& c = state.config;
    ++state.step;
    const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = c.beta1 * m + (1.0 - c.beta1) * grad;
        v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
        param.array() -= c.learning_rate * (m.array() / correction1) /
                         ((v.array() / correction2).sqrt() + c.epsilon);
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weight, gradients[l].weight, state.first_moment[l].weight, state.second_moment[l].weight);
        update(layers[l].bias, gradients[l].bias, state.first_moment[l].bias, state.second_moment[l].bias);
    }
}

void save_checkpoint(const std::filesystem::path& path, const ProjectionModel& model, const nlohmann::json& metadata) {
    nlohmann::json header;
    header["format"] = "trimine-checkpoint";
    header["version"] = 1;
    header["activation"] = "relu";
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto& layer : model.layers()) {
        shapes.push_back({{"weight", {layer.weight.rows(), layer.weight.cols()}}, {"bias", layer.bias.size()}});
    }
    header["layers"] = shapes;
    header["metadata"] = metadata;

    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << header.dump() << '\n';
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& layer = model.layers()[l];
        out << "layer" << l << ".weight";
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                out << ',' << csv::format(layer.weight(r, c));
            }
        }
        out << "\nlayer" << l << ".bias";
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            out << ',' << csv::format(layer.bias[r]);
        }
        out << '\n';
    }
}

ProjectionModel load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open checkpoint '" + path.string() + "'");
    }
    std::string line;
    std::getline(in, line);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("format", "") != "trimine-checkpoint") {
        throw ParseError("'" + path.string() + "' is not a trimine checkpoint");
    }

    Parameters layers;
    std::size_t line_no = 1;
    auto read_tensor = [&](const std::string& name, Eigen::Index expected) {
        if (!std::getline(in, line)) {
            throw ParseError("checkpoint truncated before " + name);
        }
        ++line_no;
        const auto fields = csv::split_line(line);
        if (fields.empty() || fields[0] != name || static_cast<Eigen::Index>(fields.size()) != expected + 1) {
            throw ParseError("checkpoint line " + std::to_string(line_no) + ": expected tensor " + name + " with " +
                             std::to_string(expected) + " values");
        }
        std::vector<double> values;
        values.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            values.push_back(csv::parse_double(fields[i], name, line_no));
        }
        return values;
    };
    std::size_t l = 0;
    for (const auto& shape : header.at("layers")) {
        const auto rows = shape.at("weight").at(0).get<Eigen::Index>();
        const auto cols = shape.at("weight").at(1).get<Eigen::Index>();
        const auto bias = shape.at("bias").get<Eigen::Index>();
        const auto w = read_tensor("layer" + std::to_string(l) + ".weight", rows * cols);
        const auto b = read_tensor("layer" + std::to_string(l) + ".bias", bias);
        DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(bias)};
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
            }
        }
        for (Eigen::Index r = 0; r < bias; ++r) {
            layer.bias[r] = b[static_cast<std::size_t>(r)];
        }
        layers.push_back(std::move(layer));
        ++l;
    }
    if (metadata != nullptr) {
        *metadata = header.value("metadata", nlohmann::json::object());
    }
    return ProjectionModel(std::move(layers));
}

} // namespace trimine
