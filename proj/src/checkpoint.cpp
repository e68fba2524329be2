#include "pbu/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pbu/errors.hpp"

namespace pbu {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& what) {
    std::ostringstream os;
    os << path << ":" << line << ": " << what;
    throw ParseError(os.str());
}

std::string spec_line(const ModelSpec& spec) {
    std::ostringstream os;
    os << "d=" << spec.input_dim << " hidden=";
    for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
        if (i) os << ",";
        os << spec.hidden_dims[i];
    }
    os << " classes=" << spec.num_classes;
    return os.str();
}

ModelSpec parse_spec_line(const std::string& path, const std::string& line) {
    ModelSpec spec;
    std::istringstream is(line);
    std::string tok;
    bool have_d = false, have_hidden = false, have_classes = false;
    while (is >> tok) {
        if (tok.rfind("d=", 0) == 0) {
            spec.input_dim = std::stoull(tok.substr(2));
            have_d = true;
        } else if (tok.rfind("hidden=", 0) == 0) {
            have_hidden = true;
            const std::string list = tok.substr(7);
            std::size_t pos = 0;
            while (pos < list.size()) {
                std::size_t next = list.find(',', pos);
                if (next == std::string::npos) next = list.size();
                spec.hidden_dims.push_back(std::stoull(list.substr(pos, next - pos)));
                pos = next + 1;
            }
        } else if (tok.rfind("classes=", 0) == 0) {
            spec.num_classes = std::stoi(tok.substr(8));
            have_classes = true;
        } else {
            fail(path, 2, "unexpected token \"" + tok + "\" in spec line");
        }
    }
    if (!have_d || !have_hidden || !have_classes)
        fail(path, 2, "spec line must contain d=, hidden=, classes=");
    return spec;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    check_theta(ckpt.spec, ckpt.theta);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "PBUCKPT v1\n" << spec_line(ckpt.spec) << "\nm=" << ckpt.theta.size() << "\n";
    char buf[64];
    for (double v : ckpt.theta) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof buf, "%.17g", ckpt.meta.final_loss);
    out << "meta seed=" << ckpt.meta.seed << " epochs=" << ckpt.meta.epochs << " final_loss=" << buf
        << "\n";
    if (!out.good()) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    auto next_line = [&](std::size_t lineno) {
        if (!std::getline(in, line)) fail(path, lineno, "unexpected end of file");
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };

    next_line(1);
    if (line.rfind("PBUCKPT ", 0) != 0) fail(path, 1, "not a PBUCKPT file");
    if (line != "PBUCKPT v1") fail(path, 1, "unsupported version \"" + line.substr(8) + "\"");

    next_line(2);
    Checkpoint ckpt;
    try {
        ckpt.spec = parse_spec_line(path, line);
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        fail(path, 2, "malformed spec line");
    }
    ckpt.spec.validate();

    next_line(3);
    if (line.rfind("m=", 0) != 0) fail(path, 3, "expected m=<count>");
    std::size_t m = 0;
    try {
        m = std::stoull(line.substr(2));
    } catch (const std::exception&) {
        fail(path, 3, "malformed parameter count");
    }
    if (m != ckpt.spec.param_count()) {
        std::ostringstream os;
        os << "parameter count " << m << " does not match spec (" << ckpt.spec.param_count()
           << ")";
        fail(path, 3, os.str());
    }

    ckpt.theta.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        next_line(4 + i);
        try {
            std::size_t pos = 0;
            ckpt.theta[i] = std::stod(line, &pos);
            if (pos != line.size()) throw std::invalid_argument("junk");
        } catch (const std::exception&) {
            fail(path, 4 + i, "malformed parameter value \"" + line + "\"");
        }
    }

    // optional trailing meta line
    if (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) {
            std::uint64_t seed = 0;
            int epochs = 0;
            double loss = 0.0;
            if (std::sscanf(line.c_str(), "meta seed=%" SCNu64 " epochs=%d final_loss=%lf", &seed,
                            &epochs, &loss) != 3)
                fail(path, 4 + m, "malformed meta line");
            ckpt.meta = {seed, epochs, loss};
        }
    }
    return ckpt;
}

}  // namespace pbu
