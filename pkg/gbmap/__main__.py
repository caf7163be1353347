from gbmap.cli import main

main()
