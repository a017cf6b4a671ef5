#include "mcal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

namespace mcal {

namespace {

// RFC-4180 record splitter: quoted fields, doubled quotes, embedded
// separators and line breaks inside quotes.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields)
    {
        fields.clear();
        if (in_.peek() == std::char_traits<char>::eof()) {
            return false;
        }
        std::string field;
        bool quoted = false;
        bool any = false;
        for (int c = in_.get(); c != std::char_traits<char>::eof(); c = in_.get()) {
            any = true;
            if (quoted) {
                if (c == '"') {
                    if (in_.peek() == '"') {
                        field.push_back('"');
                        in_.get();
                    } else {
                        quoted = false;
                    }
                } else {
                    field.push_back(static_cast<char>(c));
                }
                continue;
            }
            if (c == '"') {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(field));
                field.clear();
            } else if (c == '\r') {
                if (in_.peek() == '\n') {
                    in_.get();
                }
                break;
            } else if (c == '\n') {
                break;
            } else {
                field.push_back(static_cast<char>(c));
            }
        }
        if (quoted) {
            throw ValidationError("malformed CSV: unterminated quoted field");
        }
        if (!any) {
            return false;
        }
        fields.push_back(std::move(field));
        return true;
    }

private:
    std::istream& in_;
};

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

double parse_number(const std::string& raw, const std::string& column, std::size_t line)
{
    const std::string s = trim(raw);
    double value = 0.0;
    const auto* begin = s.data();
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, value);
    if (s.empty() || res.ec != std::errc() || res.ptr != end) {
        // from_chars rejects "nan"/"inf" spellings with a leading '+'; treat
        // every unparsable token uniformly.
        std::ostringstream msg;
        msg << "non-numeric value '" << raw << "' in column '" << column << "' at line " << line;
        throw ValidationError(msg.str());
    }
    if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite value in column '" << column << "' at line " << line;
        throw ValidationError(msg.str());
    }
    return value;
}

long long parse_label(const std::string& raw, std::size_t line)
{
    const std::string s = trim(raw);
    long long value = 0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, value);
    if (s.empty() || res.ec != std::errc() || res.ptr != end) {
        // Accept integral values written as reals ("2.0").
        double d = 0.0;
        const auto rd = std::from_chars(s.data(), end, d);
        if (rd.ec == std::errc() && rd.ptr == end && std::isfinite(d) && d == std::floor(d)) {
            return static_cast<long long>(d);
        }
        std::ostringstream msg;
        msg << "treatment value '" << raw << "' at line " << line << " is not integer-codable";
        throw ValidationError(msg.str());
    }
    return value;
}

} // namespace

std::vector<Index> Dataset::group_sizes() const
{
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (int ti : t) {
        ++sizes[static_cast<std::size_t>(ti)];
    }
    return sizes;
}

void validate(const Dataset& d)
{
    const Index n = d.f.rows();
    if (d.k < 2) {
        throw ValidationError("at least 2 treatment levels are required");
    }
    if (d.f.cols() < 1) {
        throw ValidationError("design matrix must contain the intercept column");
    }
    if (d.y.size() != n || static_cast<Index>(d.t.size()) != n) {
        throw ValidationError("outcome, treatment and design row counts differ");
    }
    if (n < d.k) {
        throw ValidationError("fewer observations than treatment levels");
    }
    if (!d.names.empty() && static_cast<Index>(d.names.size()) != d.f.cols()) {
        throw ValidationError("column name count does not match design columns");
    }
    std::vector<Index> sizes(static_cast<std::size_t>(d.k), 0);
    for (int ti : d.t) {
        if (ti < 0 || ti >= d.k) {
            throw ValidationError("treatment code outside 0..K-1");
        }
        ++sizes[static_cast<std::size_t>(ti)];
    }
    for (int level = 0; level < d.k; ++level) {
        if (sizes[static_cast<std::size_t>(level)] == 0) {
            throw ValidationError("treatment level " + std::to_string(level) + " has zero rows");
        }
    }
    for (Index i = 0; i < n; ++i) {
        if (d.f(i, 0) != 1.0) {
            throw ValidationError("column 0 of the design must be identically 1");
        }
    }
    if (!d.y.allFinite() || !d.f.allFinite()) {
        throw ValidationError("non-finite value in outcome or regressors");
    }
}

Dataset make_dataset(Vector y, std::vector<int> t, Matrix f, int k, std::vector<std::string> names)
{
    Dataset d;
    d.y = std::move(y);
    d.t = std::move(t);
    d.f = std::move(f);
    d.k = k;
    if (names.empty()) {
        names.reserve(static_cast<std::size_t>(d.f.cols()));
        names.emplace_back("(Intercept)");
        for (Index j = 1; j < d.f.cols(); ++j) {
            names.push_back("x" + std::to_string(j));
        }
    }
    d.names = std::move(names);
    validate(d);
    return d;
}

Dataset from_covariates(Vector y, std::vector<int> t, const Matrix& x, int k,
                        std::vector<std::string> covariate_names)
{
    Matrix f(x.rows(), x.cols() + 1);
    f.col(0).setOnes();
    f.rightCols(x.cols()) = x;
    std::vector<std::string> names;
    if (!covariate_names.empty()) {
        if (static_cast<Index>(covariate_names.size()) != x.cols()) {
            throw ValidationError("covariate name count does not match covariate columns");
        }
        names.emplace_back("(Intercept)");
        names.insert(names.end(), covariate_names.begin(), covariate_names.end());
    }
    return make_dataset(std::move(y), std::move(t), std::move(f), k, std::move(names));
}

Dataset subset_rows(const Dataset& d, std::span<const Index> rows)
{
    const auto m = static_cast<Index>(rows.size());
    Vector y(m);
    std::vector<int> t(rows.size());
    Matrix f(m, d.f.cols());
    for (Index r = 0; r < m; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        y(r) = d.y(i);
        t[static_cast<std::size_t>(r)] = d.t[static_cast<std::size_t>(i)];
        f.row(r) = d.f.row(i);
    }
    return make_dataset(std::move(y), std::move(t), std::move(f), d.k, d.names);
}

LoadedData load_csv(const std::filesystem::path& path, const ColumnSchema& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open input file '" + path.string() + "'");
    }
    CsvReader reader(in);
    std::vector<std::string> header;
    if (!reader.next(header)) {
        throw ValidationError("CSV file is empty: '" + path.string() + "'");
    }
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) {
        header[0].erase(0, 3);
    }
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t c = 0; c < header.size(); ++c) {
        header[c] = trim(header[c]);
        position.emplace(header[c], c);
    }
    auto column = [&](const std::string& name) {
        const auto it = position.find(name);
        if (it == position.end()) {
            throw ValidationError("missing column '" + name + "'");
        }
        return it->second;
    };
    const std::size_t y_col = column(schema.outcome);
    const std::size_t t_col = column(schema.treatment);
    std::vector<std::string> cov_names = schema.covariates;
    if (cov_names.empty()) {
        for (const auto& h : header) {
            if (h != schema.outcome && h != schema.treatment) {
                cov_names.push_back(h);
            }
        }
    }
    std::vector<std::size_t> cov_cols;
    cov_cols.reserve(cov_names.size());
    for (const auto& name : cov_names) {
        cov_cols.push_back(column(name));
    }

    std::vector<double> ys;
    std::vector<long long> labels;
    std::vector<double> xs;
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (reader.next(fields)) {
        ++line;
        if (fields.size() == 1 && trim(fields[0]).empty()) {
            continue;
        }
        if (fields.size() != header.size()) {
            std::ostringstream msg;
            msg << "malformed CSV: line " << line << " has " << fields.size() << " fields, expected "
                << header.size();
            throw ValidationError(msg.str());
        }
        ys.push_back(parse_number(fields[y_col], schema.outcome, line));
        labels.push_back(parse_label(fields[t_col], line));
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            xs.push_back(parse_number(fields[cov_cols[c]], cov_names[c], line));
        }
    }
    if (ys.empty()) {
        throw ValidationError("CSV file has no data rows");
    }

    std::map<long long, int> code;
    for (long long l : labels) {
        code.emplace(l, 0);
    }
    if (code.size() < 2) {
        throw ValidationError("fewer than 2 treatment levels");
    }
    LoadedData out;
    int next = 0;
    for (auto& [label, c] : code) {
        c = next++;
        out.treatment_labels.push_back(std::to_string(label));
    }

    const auto n = static_cast<Index>(ys.size());
    const auto p = static_cast<Index>(cov_cols.size());
    Vector y = Eigen::Map<const Vector>(ys.data(), n);
    std::vector<int> t(ys.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        t[i] = code.at(labels[i]);
    }
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            x(i, j) = xs[static_cast<std::size_t>(i * p + j)];
        }
    }
    out.data = from_covariates(std::move(y), std::move(t), x, static_cast<int>(code.size()), cov_names);
    return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& d, const std::string& outcome,
               const std::string& treatment)
{
    std::ofstream out(path);
    if (!out) {
        throw ValidationError("cannot open output file '" + path.string() + "'");
    }
    out << outcome << ',' << treatment;
    for (Index j = 1; j < d.f.cols(); ++j) {
        out << ',' << d.names[static_cast<std::size_t>(j)];
    }
    out << '\n' << std::setprecision(17);
    for (Index i = 0; i < d.n(); ++i) {
        out << d.y(i) << ',' << d.t[static_cast<std::size_t>(i)];
        for (Index j = 1; j < d.f.cols(); ++j) {
            out << ',' << d.f(i, j);
        }
        out << '\n';
    }
}

Matrix Standardization::transform(const Matrix& f) const
{
    if (!applied) {
        return f;
    }
    Matrix out = f;
    for (Index j = 0; j < means.size(); ++j) {
        out.col(j + 1) = (f.col(j + 1).array() - means(j)) / scales(j);
    }
    return out;
}

Matrix Standardization::destandardize(const Matrix& coef) const
{
    if (!applied) {
        return coef;
    }
    // x_std = (x - m) / s, so b_std * x_std = (b_std / s) x - b_std m / s.
    Matrix out = coef;
    for (Index j = 0; j < means.size(); ++j) {
        out.row(j + 1) = coef.row(j + 1) / scales(j);
        out.row(0) -= coef.row(j + 1) * (means(j) / scales(j));
    }
    return out;
}

Matrix Standardization::standardize_coefficients(const Matrix& coef) const
{
    if (!applied) {
        return coef;
    }
    Matrix out = coef;
    for (Index j = 0; j < means.size(); ++j) {
        out.row(j + 1) = coef.row(j + 1) * scales(j);
        out.row(0) += coef.row(j + 1) * means(j);
    }
    return out;
}

Standardization fit_standardization(const Matrix& f, const std::vector<std::string>& names)
{
    const Index n = f.rows();
    const Index p = f.cols() - 1;
    Standardization s;
    s.means.resize(p);
    s.scales.resize(p);
    s.applied = true;
    for (Index j = 0; j < p; ++j) {
        const auto col = f.col(j + 1);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / static_cast<double>(n);
        if (!(var > 0.0) || var <= 1e-24 * (1.0 + mean * mean)) {
            const std::string name = static_cast<Index>(names.size()) > j + 1
                                         ? names[static_cast<std::size_t>(j + 1)]
                                         : "column " + std::to_string(j + 1);
            throw ValidationError("zero-variance column '" + name + "'");
        }
        s.means(j) = mean;
        s.scales(j) = std::sqrt(var);
    }
    return s;
}

std::pair<Dataset, Standardization> standardize(const Dataset& d)
{
    Standardization s = fit_standardization(d.f, d.names);
    Dataset out = d;
    out.f = s.transform(d.f);
    return {std::move(out), std::move(s)};
}

Matrix treatment_indicators(const Dataset& d)
{
    Matrix r = Matrix::Zero(d.n(), d.k);
    for (Index i = 0; i < d.n(); ++i) {
        r(i, d.t[static_cast<std::size_t>(i)]) = 1.0;
    }
    return r;
}

Dataset expand_pairwise(const Dataset& d, double min_frequency)
{
    const Index n = d.n();
    const Index p = d.p();
    std::vector<Vector> extra;
    std::vector<std::string> extra_names;
    for (Index a = 1; a <= p; ++a) {
        for (Index b = a + 1; b <= p; ++b) {
            Vector prod = d.f.col(a).cwiseProduct(d.f.col(b));
            const auto nonzero = (prod.array() != 0.0).count();
            if (static_cast<double>(nonzero) < min_frequency * static_cast<double>(n)) {
                continue;
            }
            extra.push_back(std::move(prod));
            extra_names.push_back(d.names[static_cast<std::size_t>(a)] + ":" +
                                  d.names[static_cast<std::size_t>(b)]);
        }
    }
    Matrix f(n, d.f.cols() + static_cast<Index>(extra.size()));
    f.leftCols(d.f.cols()) = d.f;
    for (std::size_t e = 0; e < extra.size(); ++e) {
        f.col(d.f.cols() + static_cast<Index>(e)) = extra[e];
    }
    std::vector<std::string> names = d.names;
    names.insert(names.end(), extra_names.begin(), extra_names.end());
    return make_dataset(d.y, d.t, std::move(f), d.k, std::move(names));
}

} // namespace mcal
