#include "fibretrap/scan_table.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

namespace fibretrap {

char const* to_string(ScanTable::Role role)
{
    switch (role)
    {
    case ScanTable::Role::independent: return "independent";
    case ScanTable::Role::dependent: return "dependent";
    case ScanTable::Role::error: return "error";
    }
    return "dependent";
}

namespace {

ScanTable::Role parse_role(std::string const& s)
{
    if (s == "independent")
        return ScanTable::Role::independent;
    if (s == "dependent")
        return ScanTable::Role::dependent;
    if (s == "error")
        return ScanTable::Role::error;
    throw TableError("unknown column role '" + s + "'");
}

std::vector<std::string> split(std::string const& line, char sep)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep))
        out.push_back(cell);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

std::string trim(std::string s)
{
    auto const not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

}  // namespace

ScanTable::Column& ScanTable::add(std::string name, Role role, std::vector<double> values)
{
    if (has(name))
        throw TableError("duplicate column '" + name + "'");
    if (name.find_first_of(",\n#") != std::string::npos)
        throw TableError("column name '" + name + "' contains a reserved character");
    columns.push_back({std::move(name), role, std::move(values)});
    return columns.back();
}

ScanTable::Column const& ScanTable::column(std::string const& name) const
{
    for (auto const& c : columns)
    {
        if (c.name == name)
            return c;
    }
    throw TableError("no column '" + name + "'");
}

ScanTable::Column& ScanTable::column(std::string const& name)
{
    return const_cast<Column&>(std::as_const(*this).column(name));
}

bool ScanTable::has(std::string const& name) const
{
    return std::any_of(columns.begin(), columns.end(),
                       [&](Column const& c) { return c.name == name; });
}

std::size_t ScanTable::rows() const
{
    return columns.empty() ? 0 : columns.front().values.size();
}

void ScanTable::set_meta(std::string const& key, std::string value)
{
    if (key == "roles" || key.find_first_of(":\n") != std::string::npos
        || value.find('\n') != std::string::npos)
        throw TableError("metadata key '" + key + "' is reserved or malformed");
    for (auto& kv : metadata)
    {
        if (kv.first == key)
        {
            kv.second = std::move(value);
            return;
        }
    }
    metadata.emplace_back(key, std::move(value));
}

std::string const& ScanTable::meta(std::string const& key) const
{
    for (auto const& kv : metadata)
    {
        if (kv.first == key)
            return kv.second;
    }
    throw TableError("no metadata entry '" + key + "'");
}

void ScanTable::validate() const
{
    for (auto const& c : columns)
    {
        if (c.values.size() != rows())
            throw TableError(fmt::format("column '{}' has {} rows, expected {}", c.name,
                                         c.values.size(), rows()));
        if (c.role == Role::error)
        {
            for (double v : c.values)
            {
                if (!(v >= 0) || !std::isfinite(v))
                    throw TableError("column '" + c.name + "' holds a negative or non-finite error");
            }
        }
    }
}

void ScanTable::write_csv(std::ostream& os) const
{
    validate();
    for (auto const& [k, v] : metadata)
        os << "# " << k << ": " << v << '\n';
    std::string roles;
    for (std::size_t c = 0; c < columns.size(); ++c)
        roles += (c ? "," : "") + std::string(to_string(columns[c].role));
    os << "# roles: " << roles << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c)
        os << (c ? "," : "") << columns[c].name;
    os << '\n';
    for (std::size_t r = 0; r < rows(); ++r)
    {
        for (std::size_t c = 0; c < columns.size(); ++c)
            os << (c ? "," : "") << fmt::format("{:.12g}", columns[c].values[r]);
        os << '\n';
    }
}

ScanTable ScanTable::read_csv(std::istream& is)
{
    ScanTable t;
    std::string line;
    std::vector<std::string> roles;
    bool header = false;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        if (line[0] == '#')
        {
            auto const colon = line.find(':');
            if (colon == std::string::npos)
                throw TableError("malformed metadata line: " + line);
            std::string key = trim(line.substr(1, colon - 1));
            std::string value = trim(line.substr(colon + 1));
            if (key == "roles")
                roles = split(value, ',');
            else
                t.metadata.emplace_back(std::move(key), std::move(value));
            continue;
        }
        auto cells = split(line, ',');
        if (!header)
        {
            if (!roles.empty() && roles.size() != cells.size())
                throw TableError("roles line does not match the header");
            for (std::size_t c = 0; c < cells.size(); ++c)
                t.add(cells[c], roles.empty() ? Role::dependent : parse_role(roles[c]));
            header = true;
            continue;
        }
        if (cells.size() != t.columns.size())
            throw TableError("row width does not match the header: " + line);
        for (std::size_t c = 0; c < cells.size(); ++c)
            t.columns[c].values.push_back(std::stod(cells[c]));
    }
    t.validate();
    return t;
}

}  // namespace fibretrap
