// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <expel/environment.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace expel::shop
{

inline constexpr std::size_t kItemsPerPage = 10;

struct ShopGoal
{
    std::set<std::string> attributes; // U_att
    std::set<std::string> options;    // U_opt
    double price_cap = 0.0;           // u_price
    std::string title;                // target product title, for TextMatch
    std::string query;
    std::string category;
};

struct ShopItem
{
    std::string asin;
    std::string title;
    std::string category;
    std::string query;
    double price = 0.0;
    std::set<std::string> attributes;                       // Y_att
    std::map<std::string, std::vector<std::string>> option_choices;
    std::set<std::string> selected_options;                 // Y_opt at purchase time
};

/// Extracts the content tokens compared by TextMatch. Swappable for a part-of-speech based tagger.
class TitleTagger
{
  public:
    virtual ~TitleTagger() = default;
    [[nodiscard]] virtual std::set<std::string> content_tokens(std::string_view title) const = 0;
};

/// Lowercased alphabetic runs minus a short stopword list.
class SimpleTitleTagger final: public TitleTagger
{
  public:
    [[nodiscard]] std::set<std::string> content_tokens(std::string_view title) const override;
};

[[nodiscard]] TitleTagger const& default_tagger();

/// |shared tokens| / |goal tokens|; 0 when the goal has no content tokens.
[[nodiscard]] double text_match(std::string_view purchasedTitle,
                                std::string_view goalTitle,
                                TitleTagger const& tagger = default_tagger());

/// Piecewise type multiplier, cases evaluated top to bottom:
/// 0 if tm = 0; 0.1 if tm < 0.1; 0.5 if tm <= 0.2 and neither query nor category match; else 1.
[[nodiscard]] double r_type(double textMatch, bool queryMatch, bool categoryMatch) noexcept;

/// (|U_att ∩ Y_att| + |U_opt ∩ Y_opt| + [y_price <= u_price]) / (|U_att| + |U_opt| + 1) * r_type.
[[nodiscard]] double shop_reward(ShopItem const& purchased,
                                 ShopGoal const& goal,
                                 TitleTagger const& tagger = default_tagger());

/// Web-shop analog: search page, paginated results, item pages with selectable options, Buy Now.
class ShopEnvironment final: public Environment
{
  public:
    explicit ShopEnvironment(std::filesystem::path const& dir);

    [[nodiscard]] std::string const& name() const noexcept override { return _name; }
    [[nodiscard]] std::vector<Task> const& tasks() const noexcept override { return _tasks; }
    EnvObservation reset(std::string const& taskId) override;
    EnvObservation step(std::string_view action) override;
    [[nodiscard]] bool done() const noexcept override { return _page == Page::Done; }

    [[nodiscard]] std::vector<ShopItem> const& catalog() const noexcept { return _catalog; }
    [[nodiscard]] ShopGoal const& goal(std::string const& taskId) const { return _goals.at(taskId); }
    /// Items matching a query in result order (all pages).
    [[nodiscard]] std::vector<std::size_t> search(std::string_view query) const;

  private:
    enum class Page
    {
        Search,
        Results,
        Item,
        Done,
    };

    std::string render_search() const;
    std::string render_results() const;
    std::string render_item() const;
    EnvObservation click(std::string_view target);

    std::string _name = "toyshop";
    std::vector<Task> _tasks;
    std::map<std::string, ShopGoal> _goals;
    std::vector<ShopItem> _catalog;

    std::string _taskId;
    std::string _instruction;
    Page _page = Page::Done;
    bool _started = false;
    std::vector<std::size_t> _results;
    std::size_t _resultPage = 0;
    std::optional<std::size_t> _item;
    std::map<std::string, std::string> _selected; // option name -> chosen value
};

} // namespace expel::shop
