from depfuse.cli import main

main()
