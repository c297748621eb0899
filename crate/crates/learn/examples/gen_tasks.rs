fn main() {
    let root = std::path::Path::new("assets/tasks");
    for task in [dexgen_learn::tasks::reach_task(), dexgen_learn::tasks::pick_task()] {
        dexgen_learn::tasks::write_task(&root.join(&task.name), &task).unwrap();
        println!("wrote {}", task.name);
    }
}
