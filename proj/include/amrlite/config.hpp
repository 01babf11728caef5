#ifndef AMRLITE_CONFIG_HPP
#define AMRLITE_CONFIG_HPP

// Plain-text key=value configuration.  Lines starting with '#' are comments;
// later assignments override earlier ones.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "core_index.hpp"

namespace amrlite {

class Config
{
  public:
    Config() = default;

    static Config from_string(const std::string& text)
    {
        Config c;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw Error("config line " + std::to_string(lineno) + ": empty key");
            c.values_[key] = trim(line.substr(eq + 1));
        }
        return c;
    }

    static Config from_file(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config file " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return from_string(ss.str());
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    const std::string& raw(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error("missing config key " + key);
        return it->second;
    }

    template <typename T>
    T get(const std::string& key) const
    {
        return parse<T>(key, raw(key));
    }

    template <typename T>
    T get(const std::string& key, const T& fallback) const
    {
        return has(key) ? get<T>(key) : fallback;
    }

    /// Whitespace- or comma-separated list.
    template <typename T>
    std::vector<T> get_list(const std::string& key) const
    {
        std::string s = raw(key);
        for (char& ch : s)
            if (ch == ',') ch = ' ';
        std::istringstream in(s);
        std::vector<T> out;
        std::string tok;
        while (in >> tok) out.push_back(parse<T>(key, tok));
        return out;
    }

    /// A D-vector given either as one value (broadcast) or D values.
    template <int D>
    IntVect<D> get_intvect(const std::string& key, const IntVect<D>& fallback) const
    {
        if (!has(key)) return fallback;
        auto v = get_list<int>(key);
        if (v.size() == 1) return IntVect<D>(v[0]);
        if (static_cast<int>(v.size()) != D) throw Error("config key " + key + ": expected 1 or " + std::to_string(D) + " values");
        IntVect<D> r;
        for (int d = 0; d < D; ++d) r[d] = v[static_cast<std::size_t>(d)];
        return r;
    }

  private:
    static std::string trim(const std::string& s)
    {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    template <typename T>
    static T parse(const std::string& key, const std::string& text)
    {
        if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "1" || text == "true") return true;
            if (text == "0" || text == "false") return false;
            throw Error("config key " + key + ": expected a boolean, got '" + text + "'");
        } else {
            std::istringstream in(text);
            T v{};
            in >> v;
            if (!in || !(in >> std::ws).eof()) throw Error("config key " + key + ": cannot parse '" + text + "'");
            return v;
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace amrlite

#endif // AMRLITE_CONFIG_HPP
