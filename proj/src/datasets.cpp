#include "fire/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fire/csvio.hpp"

namespace fire {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Fragment make_blobs(int n, int classes, int dim, double noise, Rng& rng) {
    if (n < classes || classes < 2 || dim < 2)
        throw DataError("make_blobs: need n >= classes >= 2 and dim >= 2");
    Fragment frag;
    frag.id = "blobs";
    const double radius = 2.0;
    for (int i = 0; i < n; ++i) {
        int c = i % classes;
        double angle = 2.0 * kPi * c / classes;
        Example ex;
        ex.y = c;
        ex.x.assign(dim, 0.0);
        ex.x[0] = radius * std::cos(angle);
        ex.x[1] = radius * std::sin(angle);
        for (int j = 0; j < dim; ++j) ex.x[j] += noise * rng.normal();
        frag.examples.push_back(std::move(ex));
    }
    rng.shuffle(frag.examples);
    return frag;
}

Fragment make_two_moons(int n, double noise, Rng& rng) {
    if (n < 2) throw DataError("make_two_moons: need at least two examples");
    Fragment frag;
    frag.id = "two_moons";
    for (int i = 0; i < n; ++i) {
        double t = kPi * rng.uniform01();
        Example ex;
        if (i % 2 == 0) {
            ex.y = 0;
            ex.x = {std::cos(t), std::sin(t)};
        } else {
            ex.y = 1;
            ex.x = {1.0 - std::cos(t), 0.5 - std::sin(t)};
        }
        ex.x[0] += noise * rng.normal();
        ex.x[1] += noise * rng.normal();
        frag.examples.push_back(std::move(ex));
    }
    rng.shuffle(frag.examples);
    return frag;
}

int LabelMap::intern(const std::string& name) {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == name) return static_cast<int>(i);
    classes.push_back(name);
    return static_cast<int>(classes.size()) - 1;
}

int LabelMap::lookup(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == name) return static_cast<int>(i);
    return -1;
}

FeatureStats FeatureStats::fit(const Fragment& frag) {
    if (frag.examples.empty()) throw DataError("FeatureStats: empty fragment");
    const std::size_t d = frag.examples.front().x.size();
    FeatureStats st;
    st.mean.assign(d, 0.0);
    st.scale.assign(d, 1.0);
    for (const Example& ex : frag.examples)
        for (std::size_t j = 0; j < d; ++j) st.mean[j] += ex.x[j];
    for (double& m : st.mean) m /= static_cast<double>(frag.examples.size());
    std::vector<double> var(d, 0.0);
    for (const Example& ex : frag.examples)
        for (std::size_t j = 0; j < d; ++j)
            var[j] += (ex.x[j] - st.mean[j]) * (ex.x[j] - st.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
        double v = var[j] / static_cast<double>(frag.examples.size());
        st.scale[j] = v > 1e-12 ? std::sqrt(v) : 1.0;
    }
    return st;
}

Fragment FeatureStats::apply(const Fragment& frag) const {
    Fragment out = frag;
    for (Example& ex : out.examples) {
        if (ex.x.size() != mean.size())
            throw DimensionError("FeatureStats: feature length mismatch");
        for (std::size_t j = 0; j < ex.x.size(); ++j)
            ex.x[j] = (ex.x[j] - mean[j]) / scale[j];
    }
    return out;
}

Fragment load_csv_examples(const std::string& path, const std::string& label_column,
                           LabelMap& labels) {
    csv::Table table = csv::read_file(path);
    int label_idx = table.column(label_column);
    if (label_idx < 0)
        throw DataError("csv: label column '" + label_column + "' not found in " + path);
    Fragment frag;
    frag.id = path;
    for (const auto& row : table.rows) {
        Example ex;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (static_cast<int>(c) == label_idx) continue;
            ex.x.push_back(csv::parse_real(row[c]));
        }
        const std::string& cell = row[label_idx];
        if (cell.empty()) throw DataError("csv: missing label in " + path);
        ex.y = labels.intern(cell);
        frag.examples.push_back(std::move(ex));
    }
    if (frag.examples.empty()) throw DataError("csv: no data rows in " + path);
    return frag;
}

Fragment load_csv_dataset(const std::string& path, const std::string& label_column,
                          bool standardize) {
    LabelMap labels;
    Fragment frag = load_csv_examples(path, label_column, labels);
    if (!standardize) return frag;
    return FeatureStats::fit(frag).apply(frag);
}

void write_fragment_csv(const Fragment& frag, std::ostream& out) {
    if (frag.examples.empty()) throw DataError("write_fragment_csv: empty fragment");
    const std::size_t d = frag.examples.front().x.size();
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label\n";
    for (const Example& ex : frag.examples) {
        for (double v : ex.x) out << csv::real(v) << ',';
        out << ex.y << '\n';
    }
}

std::pair<Fragment, Fragment> split_train_val(const Fragment& full,
                                              double val_fraction, Rng& rng) {
    if (full.n() < 2) throw DataError("split: need at least two examples");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw ConfigError("split: val_fraction must lie in (0,1)");
    std::vector<int> order(full.n());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    long val_n = std::lround(val_fraction * full.n());
    val_n = std::clamp<long>(val_n, 1, full.n() - 1);

    Fragment val;
    val.id = "val";
    val.provenance = Provenance::validation;
    Fragment train;
    train.id = "train";
    for (int i = 0; i < full.n(); ++i) {
        const Example& ex = full.examples[order[i]];
        if (i < val_n)
            val.examples.push_back(ex);
        else
            train.examples.push_back(ex);
    }
    return {std::move(train), std::move(val)};
}

std::vector<Fragment> make_fragments(const Fragment& train, int count,
                                     Provenance provenance) {
    if (count < 1) throw ConfigError("fragments: count must be >= 1");
    if (count > train.n()) throw DataError("fragments: more fragments than examples");
    std::vector<Fragment> out;
    const char* stem = provenance == Provenance::fold ? "fold" : "batch";
    for (int f = 0; f < count; ++f) {
        Fragment frag;
        frag.id = stem + std::to_string(f);
        frag.provenance = provenance;
        frag.provenance_index = f;
        std::size_t lo = static_cast<std::size_t>(f) * train.n() / count;
        std::size_t hi = static_cast<std::size_t>(f + 1) * train.n() / count;
        for (std::size_t i = lo; i < hi; ++i)
            frag.examples.push_back(train.examples[i]);
        out.push_back(std::move(frag));
    }
    return out;
}

}  // namespace fire
