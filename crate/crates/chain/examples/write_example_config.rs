//! Prints the built-in example network config as JSON.

fn main() {
    let cfg = bspow_chain::agents::example_config();
    println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
}
