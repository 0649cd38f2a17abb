from horizonrec.app import main

main()
