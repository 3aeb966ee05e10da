fn main() { println!("mapseg"); }
