from livewire.cli import main

main()
