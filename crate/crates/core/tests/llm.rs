use molehill::llm::*;
use proptest::prelude::*;

const AMGN: &str = include_str!("data/amgn_resources.json");

#[test]
fn amgn_listing() {
    let links = parse_resources(AMGN).unwrap();
    assert_eq!(links.len(), 5);
    assert_eq!(links[0].name, "AMGN Stock Price History");
    assert_eq!(links[4].url, "https://www.marketwatch.com/investing/stock/amgn/industry");
}

#[test]
fn listing_inside_prose() {
    let wrapped = format!("Sure! Here are some resources [as requested]:\n\n```json\n{AMGN}```\nLet me know if [more] helps.");
    assert_eq!(parse_resources(&wrapped).unwrap(), parse_resources(AMGN).unwrap());
}

#[test]
fn query_then_parse() {
    let reply = format!("Here you go:\n{AMGN}");
    let got = query(&MockTransport::reply(reply), "prompt", &QueryConfig::default()).unwrap();
    assert_eq!(parse_resources(&got).unwrap().len(), 5);
}

proptest! {
    #[test]
    fn serialized_links_round_trip(
        items in prop::collection::vec(("[a-zA-Z0-9 \\[\\]\"{}]{1,20}", "[a-z]{1,10}", "[a-z0-9/\\[\\]]{0,12}"), 0..6)
    ) {
        let links: Vec<ResourceLink> = items
            .into_iter()
            .filter(|(name, _, _)| !name.trim().is_empty())
            .map(|(name, host, path)| ResourceLink { name: name.trim().to_string(), url: format!("https://{host}.org/{path}") })
            .collect();
        let body = serde_json::to_string_pretty(&links).unwrap();
        prop_assert_eq!(parse_resources(&body).unwrap(), links.clone());
        prop_assert_eq!(parse_resources(&format!("Answer: {body} -- end")).unwrap(), links);
    }
}
